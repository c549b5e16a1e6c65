#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothac/autodiff.hpp"
#include "smoothac/layers.hpp"
#include "smoothac/optim.hpp"
#include "smoothac/replay.hpp"
#include "smoothac/rng.hpp"

namespace smoothac {

class Checkpoint;

enum class Algorithm { sac, ddpg };
std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

struct AgentHyperparams {
    Algorithm algorithm = Algorithm::sac;
    NetworkSpec actor{NetworkKind::mlp, 2, 256, 512, SnPolicy::none, 1};
    NetworkSpec critic{NetworkKind::mlp, 2, 256, 512, SnPolicy::none, 1};
    int num_critics = 2;
    double gamma = 0.99;
    double tau = 0.01;
    AdamConfig adam{};
    std::size_t batch_size = 512;
    int actor_update_freq = 2;
    int target_update_freq = 2;
    std::size_t min_replay = 1;  // train_step is a no-op below max(min_replay, batch_size)
    double init_temperature = 0.1;
    bool learn_temperature = true;
    std::optional<double> target_entropy;  // default -action_dim
    double log_std_min = -10.0;
    double log_std_max = 2.0;
    int nstep = 1;
    // DDPG exploration: linear decay from start to end over decay_steps agent steps.
    double noise_std_start = 0.2;
    double noise_std_end = 0.05;
    std::int64_t noise_decay_steps = 1;

    void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const AgentHyperparams& h);
void from_json(const nlohmann::json& j, AgentHyperparams& h);

// Linear decay clamped at `end` after `decay_steps`.
double ddpg_noise_std(std::int64_t step, double start, double end, std::int64_t decay_steps);

// tanh-squashed Gaussian (SAC) or deterministic tanh(mu) (DDPG) over actor outputs [mu | log_sigma].
struct Policy {
    Network net;
    std::size_t action_dim = 0;
    double log_std_min = -10.0;
    double log_std_max = 2.0;
    Algorithm mode = Algorithm::sac;

    struct Heads {
        Var mu;
        Var log_std;  // clamped into [log_std_min, log_std_max]
    };
    Heads heads(Graph& g, Var features, ParamMode mode = ParamMode::trainable);
};

struct SacSample {
    Var action;    // [B x action_dim], tanh(mu + eps * sigma)
    Var log_prob;  // [B]
};

// Reparameterized sample with log-density including the tanh correction
// log(1 - a^2 + 1e-6). `eps` is [B x action_dim] standard normal noise.
SacSample sample_action_sac(Graph& g, Policy& policy, Var features, const Tensor& eps,
                            ParamMode mode = ParamMode::trainable);
SacSample sample_action_sac(Graph& g, Policy& policy, Var features, Rng& rng, ParamMode mode = ParamMode::trainable);

// clip(tanh(mu) + noise_std * eps, -1, 1).
Tensor sample_action_ddpg(Policy& policy, const Tensor& features, double noise_std, Rng& rng);
// tanh(mu), the evaluation action for both algorithms.
Tensor mean_action(Policy& policy, const Tensor& features);

struct CriticEnsemble {
    std::vector<Network> online;
    std::vector<Network> target;  // effective-weight copies, no SN state
    double ema_tau = 0.01;

    // online[k] on [action | feature] rows, result [B x 1].
    Var q(Graph& g, std::size_t k, Var input, ParamMode mode);
    Var min_q(Graph& g, Var input, ParamMode mode);
    Tensor target_min_q(const Tensor& input);

    std::vector<Parameter*> parameters();
};

// target <- tau * effective(online) + (1 - tau) * target for every parameter.
void update_targets(CriticEnsemble& ensemble, double tau);

struct Temperature {
    Parameter log_alpha{"log_alpha", Tensor::scalar(0.0)};
    double target_entropy = -1.0;

    [[nodiscard]] double alpha() const { return std::exp(log_alpha.value.item()); }
};

class Agent {
public:
    Agent(const AgentHyperparams& hyper, std::size_t obs_dim, std::size_t action_dim, std::uint64_t init_seed,
          std::uint64_t noise_seed);

    AgentHyperparams hyper;
    std::size_t obs_dim;
    std::size_t action_dim;
    Policy actor;
    CriticEnsemble critics;
    Temperature temperature;
    Adam actor_opt;
    Adam critic_opt;
    Adam alpha_opt;
    Rng noise_rng;
    double noise_std;  // current DDPG exploration std
    std::int64_t updates = 0;

    // Exploration action for one observation.
    std::vector<double> explore(const std::vector<double>& obs);
    // tanh(mu) for one observation.
    std::vector<double> act_greedy(const std::vector<double>& obs);

    std::vector<Parameter*> actor_parameters() { return actor.net.parameters(); }
    std::vector<Parameter*> critic_parameters() { return critics.parameters(); }

    void power_step();

    void save(Checkpoint& ckpt) const;
    static Agent load(const Checkpoint& ckpt);
};

// Rows [action | feature].
Tensor critic_input(const Tensor& action, const Tensor& features);

struct CriticLoss {
    Var loss;
    Tensor target;  // [B x 1], stop-gradient Bellman target
};

// mean_k mean_i (Q_k(a_i, s_i) - y_i)^2 with
// y = r + discount * (1 - done) * (min_k Qhat_k(a', s') - alpha * log pi(a'|s'))   (SAC)
// y = r + discount * (1 - done) * min_k Qhat_k(a', s'), a' = ddpg sample          (DDPG)
// Gradients reach online critic parameters only.
CriticLoss critic_loss(Graph& g, Agent& agent, const Batch& batch, Rng& rng);

struct ActorLoss {
    Var loss;
    Tensor log_prob;  // [B], detached; empty for DDPG
};

// SAC: mean(alpha * log pi(a|s) - min_k Q_k(a, s)); DDPG: mean(-min_k Q_k(tanh(mu(s)), s)).
// Critic parameters are frozen.
ActorLoss actor_loss(Graph& g, Agent& agent, const Tensor& obs, Rng& rng);

// -exp(log_alpha) * mean(log_prob + target_entropy), log_prob detached.
Var temperature_loss(Graph& g, Temperature& temperature, const Tensor& log_prob);

struct TrainMetrics {
    bool updated = false;
    bool actor_updated = false;
    bool targets_updated = false;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;
    double critic_grad_norm = 0.0;
    double actor_grad_norm = 0.0;  // last actor update's value
    std::vector<std::pair<std::string, double>> sigma_hat;  // per SN layer
};

// One critic step every call; actor + temperature every actor_update_freq
// steps; target EMA every target_update_freq steps. No-op with updated=false
// while the replay holds fewer than max(min_replay, batch_size) transitions.
TrainMetrics train_step(Agent& agent, ReplayBuffer& replay, std::int64_t step_index);

}  // namespace smoothac
