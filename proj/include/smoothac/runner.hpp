#pragma once

// Experiment orchestration.
//
// Step budgets (total_env_steps, seed_steps, eval_interval) count environment
// control steps; each agent decision consumes action_repeat of them. After the
// seed phase the agent performs one gradient update per decision.
//
// Seeding: every stream derives from the master seed with derive_seed(seed, tag):
//   "init" network initialization, "noise" policy and target noise,
//   "replay" minibatch sampling, "explore" seed-phase uniform actions,
//   "env" -> derive_seed(., episode) training resets,
//   "eval" -> derive_seed(., episode) evaluation resets.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothac/agents.hpp"
#include "smoothac/diagnostics.hpp"

namespace smoothac {

struct AgentConfig {
    std::string name = "run";
    std::string env = "pendulum_swingup";
    AgentHyperparams agent;
    int action_repeat = 2;
    std::int64_t total_env_steps = 30000;
    std::int64_t seed_steps = 1000;
    std::int64_t eval_interval = 5000;
    int eval_episodes = 5;
    std::uint64_t seed = 0;
    std::size_t replay_capacity = 100000;
    std::int64_t sigma_exact_interval = kSigmaExactInterval;
    bool save_checkpoint = true;

    // Collects every violation into one ConfigError.
    void validate() const;
    bool operator==(const AgentConfig& other) const;
};

// JSON with every field optional. A top-level "sn_policy" sets both heads.
// Defaults resolved from other fields when absent: agent.nstep (1 for sac,
// 3 for ddpg), agent.noise_decay_steps (total_env_steps / 2),
// agent.min_replay (seed_steps / action_repeat).
AgentConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const AgentConfig& c);
AgentConfig load_config(const std::filesystem::path& path);

// Applies "dotted.path=value" overrides; values parse as JSON, falling back to strings.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

// $SMOOTHAC_RUN_ROOT, or ./runs when unset.
std::filesystem::path run_root();

struct RunResult {
    std::filesystem::path run_dir;
    std::vector<EvalPoint> eval;      // after crash_hold
    std::vector<EvalPoint> raw_eval;  // evaluations actually performed
    double final_return = 0.0;
    bool crashed = false;
    std::optional<std::int64_t> crash_step;
    std::int64_t env_steps = 0;
    std::int64_t updates = 0;
    double max_actor_grad_norm = 0.0;
    double max_critic_grad_norm = 0.0;
};

// Run directory contents: config.json, metrics.csv, eval.csv, sigma.csv,
// timing.csv, summary.json and (when save_checkpoint) agent.ckpt.
RunResult run_experiment(const AgentConfig& config, const std::filesystem::path& run_dir);

// Mean undiscounted return of the greedy policy over `episodes` episodes.
double evaluate_policy(Agent& agent, const std::string& env_id, int action_repeat, int episodes, std::uint64_t seed);
// Mean return and sample standard deviation of the uniform random policy.
std::pair<double, double> random_policy_baseline(const std::string& env_id, int action_repeat, int episodes,
                                                 std::uint64_t seed);

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;  // sample std / sqrt(n); 0 for n = 1
};
MeanStderr mean_stderr(const std::vector<double>& xs);

struct MatrixAxes {
    std::vector<NetworkKind> kinds{NetworkKind::mlp, NetworkKind::modern};
    std::vector<int> depths{2};  // critic depth; the actor keeps the template depth
    std::vector<SnPolicy> sn{SnPolicy::none, SnPolicy::intermediate};
    std::vector<std::uint64_t> seeds{0};
};

struct MatrixConfig {
    AgentConfig base;
    MatrixAxes axes;
};

// {"template": <config>, "axes": {"kind": [...], "depth": [...], "sn": [...], "seeds": [...]}}
MatrixConfig parse_matrix_config(const nlohmann::json& j);

struct MatrixCell {
    NetworkKind kind;
    int depth;
    SnPolicy sn;
    std::vector<double> final_returns;
    int crashes = 0;
    MeanStderr summary;
};

// Writes <out_dir>/<kind>_d<depth>_sn-<on|off>/seed_<s>/ per run and <out_dir>/summary.csv.
std::vector<MatrixCell> run_matrix(const MatrixConfig& config, const std::filesystem::path& out_dir);

}  // namespace smoothac
