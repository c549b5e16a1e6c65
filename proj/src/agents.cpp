#include "smoothac/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "smoothac/checkpoint.hpp"
#include "smoothac/diagnostics.hpp"

namespace smoothac {

namespace {

constexpr double kTanhCorrection = 1e-6;

Tensor row_tensor(const std::vector<double>& x) { return Tensor(Shape{1, x.size()}, x); }

std::vector<double> first_row(const Tensor& t) {
    const std::size_t n = t.cols();
    return {t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(n)};
}


void mix(Tensor& target, const Tensor& source, double tau) {
    if (!target.same_shape(source)) throw DimensionError("update_targets: shape mismatch");
    auto t = target.data();
    auto s = source.data();
    if (tau == 1.0) {
        std::copy(s.begin(), s.end(), t.begin());
        return;
    }
    if (tau == 0.0) return;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * s[i] + (1.0 - tau) * t[i];
}

void zero_grads(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

void put_optimizer(Checkpoint& ckpt, const std::string& prefix, const Adam& opt) {
    ckpt.meta["optimizers"][prefix] = {{"steps", opt.steps()}, {"count", opt.first_moments().size()}};
    for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
        ckpt.put(prefix + "/m/" + std::to_string(i), opt.first_moments()[i]);
        ckpt.put(prefix + "/v/" + std::to_string(i), opt.second_moments()[i]);
    }
}

void get_optimizer(const Checkpoint& ckpt, const std::string& prefix, Adam& opt) {
    const auto& meta = ckpt.meta.at("optimizers").at(prefix);
    const std::size_t count = meta.at("count").get<std::size_t>();
    std::vector<Tensor> m, v;
    for (std::size_t i = 0; i < count; ++i) {
        m.push_back(ckpt.get(prefix + "/m/" + std::to_string(i)));
        v.push_back(ckpt.get(prefix + "/v/" + std::to_string(i)));
    }
    opt.restore(meta.at("steps").get<std::int64_t>(), std::move(m), std::move(v));
}

}  // namespace

std::string to_string(Algorithm a) { return a == Algorithm::sac ? "sac" : "ddpg"; }

Algorithm parse_algorithm(const std::string& s) {
    if (s == "sac") return Algorithm::sac;
    if (s == "ddpg") return Algorithm::ddpg;
    throw ConfigError("unknown algorithm '" + s + "' (expected sac or ddpg)");
}

void AgentHyperparams::validate() const {
    std::vector<std::string> errors;
    auto check = [&errors](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };
    try {
        actor.validate();
    } catch (const ConfigError& e) {
        errors.push_back(std::string("actor: ") + e.what());
    }
    try {
        critic.validate();
    } catch (const ConfigError& e) {
        errors.push_back(std::string("critic: ") + e.what());
    }
    check(num_critics == 1 || num_critics == 2, "num_critics must be 1 or 2");
    check(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
    check(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
    check(adam.lr >= 0.0 && std::isfinite(adam.lr), "adam.lr must be finite and >= 0");
    check(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "adam.beta1 must lie in [0, 1)");
    check(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "adam.beta2 must lie in [0, 1)");
    check(adam.eps > 0.0, "adam.eps must be > 0");
    check(batch_size >= 1, "batch_size must be >= 1");
    check(actor_update_freq >= 1, "actor_update_freq must be >= 1");
    check(target_update_freq >= 1, "target_update_freq must be >= 1");
    check(init_temperature > 0.0 && std::isfinite(init_temperature), "init_temperature must be > 0");
    check(!target_entropy || std::isfinite(*target_entropy), "target_entropy must be finite");
    check(log_std_min < log_std_max, "log_std_min must be < log_std_max");
    check(nstep >= 1, "nstep must be >= 1");
    check(noise_std_start >= 0.0 && noise_std_end >= 0.0, "noise std must be >= 0");
    check(noise_decay_steps >= 1, "noise_decay_steps must be >= 1");
    if (!errors.empty()) {
        std::ostringstream os;
        for (std::size_t i = 0; i < errors.size(); ++i) os << (i ? "; " : "") << errors[i];
        throw ConfigError(os.str());
    }
}

void to_json(nlohmann::json& j, const AgentHyperparams& h) {
    j = nlohmann::json{{"algorithm", to_string(h.algorithm)},
                       {"actor", h.actor},
                       {"critic", h.critic},
                       {"num_critics", h.num_critics},
                       {"gamma", h.gamma},
                       {"tau", h.tau},
                       {"lr", h.adam.lr},
                       {"beta1", h.adam.beta1},
                       {"beta2", h.adam.beta2},
                       {"adam_eps", h.adam.eps},
                       {"batch_size", h.batch_size},
                       {"actor_update_freq", h.actor_update_freq},
                       {"target_update_freq", h.target_update_freq},
                       {"min_replay", h.min_replay},
                       {"init_temperature", h.init_temperature},
                       {"learn_temperature", h.learn_temperature},
                       {"target_entropy", h.target_entropy ? nlohmann::json(*h.target_entropy) : nlohmann::json()},
                       {"log_std_min", h.log_std_min},
                       {"log_std_max", h.log_std_max},
                       {"nstep", h.nstep},
                       {"noise_std_start", h.noise_std_start},
                       {"noise_std_end", h.noise_std_end},
                       {"noise_decay_steps", h.noise_decay_steps}};
}

void from_json(const nlohmann::json& j, AgentHyperparams& h) {
    if (!j.is_object()) throw ConfigError("agent config must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "algorithm") h.algorithm = parse_algorithm(value.get<std::string>());
        else if (key == "actor") h.actor = value.get<NetworkSpec>();
        else if (key == "critic") h.critic = value.get<NetworkSpec>();
        else if (key == "num_critics") h.num_critics = value.get<int>();
        else if (key == "gamma") h.gamma = value.get<double>();
        else if (key == "tau") h.tau = value.get<double>();
        else if (key == "lr") h.adam.lr = value.get<double>();
        else if (key == "beta1") h.adam.beta1 = value.get<double>();
        else if (key == "beta2") h.adam.beta2 = value.get<double>();
        else if (key == "adam_eps") h.adam.eps = value.get<double>();
        else if (key == "batch_size") h.batch_size = value.get<std::size_t>();
        else if (key == "actor_update_freq") h.actor_update_freq = value.get<int>();
        else if (key == "target_update_freq") h.target_update_freq = value.get<int>();
        else if (key == "min_replay") h.min_replay = value.get<std::size_t>();
        else if (key == "init_temperature") h.init_temperature = value.get<double>();
        else if (key == "learn_temperature") h.learn_temperature = value.get<bool>();
        else if (key == "target_entropy") {
            if (value.is_null()) h.target_entropy.reset();
            else h.target_entropy = value.get<double>();
        } else if (key == "log_std_min") h.log_std_min = value.get<double>();
        else if (key == "log_std_max") h.log_std_max = value.get<double>();
        else if (key == "nstep") h.nstep = value.get<int>();
        else if (key == "noise_std_start") h.noise_std_start = value.get<double>();
        else if (key == "noise_std_end") h.noise_std_end = value.get<double>();
        else if (key == "noise_decay_steps") h.noise_decay_steps = value.get<std::int64_t>();
        else throw ConfigError("unknown agent key '" + key + "'");
    }
}

double ddpg_noise_std(std::int64_t step, double start, double end, std::int64_t decay_steps) {
    if (decay_steps <= 0 || step >= decay_steps) return end;
    if (step <= 0) return start;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
}

// ---------------------------------------------------------------------------

Policy::Heads Policy::heads(Graph& g, Var features, ParamMode mode) {
    Var out = net.forward(g, features, mode);
    Var mu = slice_cols(out, 0, action_dim);
    Var log_std = clamp(slice_cols(out, action_dim, 2 * action_dim), log_std_min, log_std_max);
    return {mu, log_std};
}

SacSample sample_action_sac(Graph& g, Policy& policy, Var features, const Tensor& eps, ParamMode mode) {
    auto [mu, log_std] = policy.heads(g, features, mode);
    if (eps.shape() != mu.shape()) throw DimensionError("sample_action_sac: noise shape mismatch");
    Var eps_var = g.constant(eps);
    Var pre = add(mu, mul(exp(log_std), eps_var));
    Var action = tanh(pre);

    Tensor half_eps_sq = eps;
    for (double& x : half_eps_sq.data()) x = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
    Var gauss = sub(g.constant(std::move(half_eps_sq)), log_std);
    Var correction = log(add_scalar(sech_squared(pre), kTanhCorrection));
    Var log_prob = sum(sub(gauss, correction), 1);
    return {action, log_prob};
}

SacSample sample_action_sac(Graph& g, Policy& policy, Var features, Rng& rng, ParamMode mode) {
    const Tensor eps = normal_tensor(Shape{g.value(features).rows(), policy.action_dim}, rng);
    return sample_action_sac(g, policy, features, eps, mode);
}

Tensor mean_action(Policy& policy, const Tensor& features) {
    Tensor out = policy.net.predict(features);
    const std::size_t b = out.rows();
    Tensor a(Shape{b, policy.action_dim});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < policy.action_dim; ++j) a(i, j) = std::tanh(out(i, j));
    }
    return a;
}

Tensor sample_action_ddpg(Policy& policy, const Tensor& features, double noise_std, Rng& rng) {
    if (noise_std < 0.0) throw ContractError("sample_action_ddpg: noise_std must be >= 0");
    Tensor a = mean_action(policy, features);
    if (noise_std == 0.0) return a;
    for (double& x : a.data()) x = std::clamp(x + noise_std * standard_normal(rng), -1.0, 1.0);
    return a;
}

// ---------------------------------------------------------------------------

Var CriticEnsemble::q(Graph& g, std::size_t k, Var input, ParamMode mode) { return online.at(k).forward(g, input, mode); }

Var CriticEnsemble::min_q(Graph& g, Var input, ParamMode mode) {
    Var out = q(g, 0, input, mode);
    for (std::size_t k = 1; k < online.size(); ++k) out = minimum(out, q(g, k, input, mode));
    return out;
}

Tensor CriticEnsemble::target_min_q(const Tensor& input) {
    Tensor out = target.at(0).predict(input);
    for (std::size_t k = 1; k < target.size(); ++k) {
        Tensor other = target[k].predict(input);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], other[i]);
    }
    return out;
}

std::vector<Parameter*> CriticEnsemble::parameters() {
    std::vector<Parameter*> out;
    for (Network& n : online) {
        auto p = n.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

void update_targets(CriticEnsemble& ensemble, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ContractError("update_targets: tau must lie in [0, 1]");
    if (ensemble.online.size() != ensemble.target.size()) throw DimensionError("update_targets: ensemble size mismatch");
    for (std::size_t k = 0; k < ensemble.online.size(); ++k) {
        Network& on = ensemble.online[k];
        Network& tg = ensemble.target[k];
        auto on_layers = on.linear_layers();
        auto tg_layers = tg.linear_layers();
        if (on_layers.size() != tg_layers.size()) throw DimensionError("update_targets: layer count mismatch");
        for (std::size_t i = 0; i < on_layers.size(); ++i) {
            mix(tg_layers[i]->weight.value, on_layers[i]->effective_weight(), tau);
            mix(tg_layers[i]->bias.value, on_layers[i]->bias.value, tau);
        }
        for (std::size_t b = 0; b < on.blocks().size(); ++b) {
            mix(tg.blocks()[b].norm.gain.value, on.blocks()[b].norm.gain.value, tau);
            mix(tg.blocks()[b].norm.shift.value, on.blocks()[b].norm.shift.value, tau);
        }
    }
}

// ---------------------------------------------------------------------------

Agent::Agent(const AgentHyperparams& h, std::size_t obs_dim_, std::size_t action_dim_, std::uint64_t init_seed,
             std::uint64_t noise_seed)
    : hyper(h),
      obs_dim(obs_dim_),
      action_dim(action_dim_),
      actor_opt(h.adam),
      critic_opt(h.adam),
      alpha_opt(h.adam),
      noise_rng(noise_seed),
      noise_std(h.noise_std_start) {
    hyper.validate();
    Rng init(init_seed);
    actor.net = build_actor_head(hyper.actor, obs_dim, action_dim, init);
    actor.action_dim = action_dim;
    actor.log_std_min = hyper.log_std_min;
    actor.log_std_max = hyper.log_std_max;
    actor.mode = hyper.algorithm;
    critics.ema_tau = hyper.tau;
    for (int k = 0; k < hyper.num_critics; ++k) {
        critics.online.push_back(build_critic_head(hyper.critic, obs_dim, action_dim, init));
        critics.target.push_back(critics.online.back().effective_copy());
    }
    temperature.log_alpha.value = Tensor::scalar(std::log(hyper.init_temperature));
    temperature.target_entropy = hyper.target_entropy.value_or(-static_cast<double>(action_dim));
}

std::vector<double> Agent::explore(const std::vector<double>& obs) {
    const Tensor x = row_tensor(obs);
    if (hyper.algorithm == Algorithm::ddpg) return first_row(sample_action_ddpg(actor, x, noise_std, noise_rng));
    Graph g;
    SacSample s = sample_action_sac(g, actor, g.constant(x), noise_rng, ParamMode::frozen);
    return first_row(g.value(s.action));
}

std::vector<double> Agent::act_greedy(const std::vector<double>& obs) { return first_row(mean_action(actor, row_tensor(obs))); }

void Agent::power_step() {
    actor.net.power_step();
    for (Network& n : critics.online) n.power_step();
}

void Agent::save(Checkpoint& ckpt) const {
    ckpt.meta["agent"] = {{"hyper", hyper},
                          {"obs_dim", obs_dim},
                          {"action_dim", action_dim},
                          {"noise_std", noise_std},
                          {"updates", updates},
                          {"target_entropy", temperature.target_entropy}};
    std::ostringstream rng_state;
    rng_state << noise_rng;
    ckpt.meta["agent"]["noise_rng"] = rng_state.str();
    actor.net.save(ckpt, "actor");
    for (std::size_t k = 0; k < critics.online.size(); ++k) {
        critics.online[k].save(ckpt, "critic." + std::to_string(k));
        critics.target[k].save(ckpt, "target." + std::to_string(k));
    }
    ckpt.put("log_alpha", temperature.log_alpha.value);
    put_optimizer(ckpt, "opt.actor", actor_opt);
    put_optimizer(ckpt, "opt.critic", critic_opt);
    put_optimizer(ckpt, "opt.alpha", alpha_opt);
}

Agent Agent::load(const Checkpoint& ckpt) {
    const auto& meta = ckpt.meta.at("agent");
    const auto h = meta.at("hyper").get<AgentHyperparams>();
    Agent agent(h, meta.at("obs_dim").get<std::size_t>(), meta.at("action_dim").get<std::size_t>(), 0, 0);
    agent.noise_std = meta.at("noise_std").get<double>();
    agent.updates = meta.at("updates").get<std::int64_t>();
    agent.temperature.target_entropy = meta.at("target_entropy").get<double>();
    std::istringstream rng_state(meta.at("noise_rng").get<std::string>());
    rng_state >> agent.noise_rng;
    agent.actor.net = Network::load(ckpt, "actor");
    for (std::size_t k = 0; k < agent.critics.online.size(); ++k) {
        agent.critics.online[k] = Network::load(ckpt, "critic." + std::to_string(k));
        agent.critics.target[k] = Network::load(ckpt, "target." + std::to_string(k));
    }
    agent.temperature.log_alpha.value = ckpt.get("log_alpha");
    get_optimizer(ckpt, "opt.actor", agent.actor_opt);
    get_optimizer(ckpt, "opt.critic", agent.critic_opt);
    get_optimizer(ckpt, "opt.alpha", agent.alpha_opt);
    return agent;
}

// ---------------------------------------------------------------------------

Tensor critic_input(const Tensor& action, const Tensor& features) {
    if (action.rows() != features.rows()) throw DimensionError("critic_input: batch mismatch");
    const std::size_t b = action.rows(), na = action.cols(), nf = features.cols();
    Tensor out(Shape{b, na + nf});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < na; ++j) out(i, j) = action(i, j);
        for (std::size_t j = 0; j < nf; ++j) out(i, na + j) = features(i, j);
    }
    return out;
}

CriticLoss critic_loss(Graph& g, Agent& agent, const Batch& batch, Rng& rng) {
    const std::size_t b = batch.size();
    if (b == 0) throw ContractError("critic_loss: empty batch");

    Tensor next_action;
    Tensor entropy_term(Shape{b}, 0.0);
    if (agent.hyper.algorithm == Algorithm::sac) {
        Graph tg;
        SacSample s = sample_action_sac(tg, agent.actor, tg.constant(batch.next_obs), rng, ParamMode::frozen);
        next_action = tg.value(s.action);
        const double alpha = agent.temperature.alpha();
        const Tensor& lp = tg.value(s.log_prob);
        for (std::size_t i = 0; i < b; ++i) entropy_term[i] = -alpha * lp[i];
    } else {
        next_action = sample_action_ddpg(agent.actor, batch.next_obs, agent.noise_std, rng);
    }
    const Tensor next_q = agent.critics.target_min_q(critic_input(next_action, batch.next_obs));

    Tensor target(Shape{b, 1});
    for (std::size_t i = 0; i < b; ++i) {
        target[i] = batch.reward[i] + batch.discount[i] * (1.0 - batch.done[i]) * (next_q[i] + entropy_term[i]);
    }

    Var input = g.constant(critic_input(batch.action, batch.obs));
    Var y = g.constant(target);
    Var loss;
    for (std::size_t k = 0; k < agent.critics.online.size(); ++k) {
        Var term = mean(square(sub(agent.critics.q(g, k, input, ParamMode::trainable), y)));
        loss = loss.valid() ? add(loss, term) : term;
    }
    loss = scale(loss, 1.0 / static_cast<double>(agent.critics.online.size()));
    return {loss, std::move(target)};
}

ActorLoss actor_loss(Graph& g, Agent& agent, const Tensor& obs, Rng& rng) {
    if (obs.rows() == 0) throw ContractError("actor_loss: empty batch");
    Var features = g.constant(obs);
    if (agent.hyper.algorithm == Algorithm::sac) {
        SacSample s = sample_action_sac(g, agent.actor, features, rng, ParamMode::trainable);
        Var q = agent.critics.min_q(g, concat(s.action, features, 1), ParamMode::frozen);
        Var q_flat = sum(q, 1);
        Var loss = mean(sub(scale(s.log_prob, agent.temperature.alpha()), q_flat));
        return {loss, g.value(s.log_prob)};
    }
    auto heads = agent.actor.heads(g, features, ParamMode::trainable);
    Var action = tanh(heads.mu);
    Var q = agent.critics.min_q(g, concat(action, features, 1), ParamMode::frozen);
    return {neg(mean(q)), Tensor()};
}

Var temperature_loss(Graph& g, Temperature& temperature, const Tensor& log_prob) {
    if (log_prob.size() == 0) throw ContractError("temperature_loss: empty log_prob");
    double m = 0.0;
    for (double x : log_prob.data()) m += x;
    m = m / static_cast<double>(log_prob.size()) + temperature.target_entropy;
    Var alpha = exp(g.param(temperature.log_alpha));
    return scale(alpha, -m);
}

// ---------------------------------------------------------------------------

TrainMetrics train_step(Agent& agent, ReplayBuffer& replay, std::int64_t step_index) {
    TrainMetrics m;
    m.alpha = agent.temperature.alpha();
    if (replay.size() < std::max(agent.hyper.min_replay, agent.hyper.batch_size) || replay.size() == 0) return m;
    m.updated = true;

    agent.power_step();
    Batch batch = replay.sample_nstep(agent.hyper.batch_size, agent.hyper.nstep, agent.hyper.gamma);

    {
        auto params = agent.critic_parameters();
        zero_grads(params);
        Graph g;
        CriticLoss cl = critic_loss(g, agent, batch, agent.noise_rng);
        g.backward(cl.loss);
        m.critic_loss = g.value(cl.loss).item();
        m.critic_grad_norm = grad_norm(params);
        agent.critic_opt.step(params);
    }

    if (step_index % agent.hyper.actor_update_freq == 0) {
        auto params = agent.actor_parameters();
        zero_grads(params);
        Graph g;
        ActorLoss al = actor_loss(g, agent, batch.obs, agent.noise_rng);
        g.backward(al.loss);
        m.actor_loss = g.value(al.loss).item();
        m.actor_grad_norm = grad_norm(params);
        agent.actor_opt.step(params);
        m.actor_updated = true;

        if (agent.hyper.algorithm == Algorithm::sac && agent.hyper.learn_temperature) {
            std::vector<Parameter*> alpha_params{&agent.temperature.log_alpha};
            zero_grads(alpha_params);
            Graph ga;
            Var tl = temperature_loss(ga, agent.temperature, al.log_prob);
            ga.backward(tl);
            m.alpha_loss = ga.value(tl).item();
            agent.alpha_opt.step(alpha_params);
        }
    }

    if (step_index % agent.hyper.target_update_freq == 0) {
        update_targets(agent.critics, agent.hyper.tau);
        m.targets_updated = true;
    }

    m.alpha = agent.temperature.alpha();
    auto record_sigma = [&m](const std::string& prefix, const Network& net) {
        for (const LinearLayer* l : net.linear_layers()) {
            if (l->sn) m.sigma_hat.emplace_back(prefix + "/" + l->name(), l->sn->sigma_hat);
        }
    };
    record_sigma("actor", agent.actor.net);
    for (std::size_t k = 0; k < agent.critics.online.size(); ++k) {
        record_sigma("critic" + std::to_string(k), agent.critics.online[k]);
    }
    ++agent.updates;
    return m;
}

}  // namespace smoothac
