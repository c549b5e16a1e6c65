#include "smoothac/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <algorithm>
#include <map>
#include <sstream>

#include "smoothac/checkpoint.hpp"
#include "smoothac/envs.hpp"

namespace smoothac {

namespace {

using json = nlohmann::json;

std::string join(const std::vector<std::string>& parts) {
    std::ostringstream os;
    for (std::size_t i = 0; i < parts.size(); ++i) os << (i ? "; " : "") << parts[i];
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << text;
}

bool finite_metrics(const TrainMetrics& m) {
    return std::isfinite(m.critic_loss) && std::isfinite(m.actor_loss) && std::isfinite(m.alpha_loss) &&
           std::isfinite(m.alpha) && std::isfinite(m.critic_grad_norm) && std::isfinite(m.actor_grad_norm);
}

std::uint64_t episode_seed(std::uint64_t master, const char* tag, std::int64_t episode) {
    return derive_seed(derive_seed(master, tag), static_cast<std::uint64_t>(episode));
}

std::vector<std::string> sn_layer_names(Agent& agent) {
    std::vector<std::string> names;
    auto add = [&names](const std::string& prefix, const Network& net) {
        for (const LinearLayer* l : net.linear_layers()) {
            if (l->sn) names.push_back(prefix + "/" + l->name());
        }
    };
    add("actor", agent.actor.net);
    for (std::size_t k = 0; k < agent.critics.online.size(); ++k) add("critic" + std::to_string(k), agent.critics.online[k]);
    return names;
}

std::vector<double> current_sigma_hat(Agent& agent) {
    std::vector<double> out;
    auto add = [&out](const Network& net) {
        for (const LinearLayer* l : net.linear_layers()) {
            if (l->sn) out.push_back(l->sn->sigma_hat);
        }
    };
    add(agent.actor.net);
    for (const Network& n : agent.critics.online) add(n);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void AgentConfig::validate() const {
    std::vector<std::string> errors;
    auto check = [&errors](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };
    try {
        agent.validate();
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    const auto ids = registered_env_ids();
    check(std::find(ids.begin(), ids.end(), env) != ids.end(), "env '" + env + "' is not registered");
    check(!name.empty(), "name must be non-empty");
    check(action_repeat >= 1, "action_repeat must be >= 1");
    check(total_env_steps >= 0, "total_env_steps must be >= 0");
    check(seed_steps >= 0, "seed_steps must be >= 0");
    check(seed_steps <= total_env_steps, "seed_steps must not exceed total_env_steps");
    check(eval_interval >= 1, "eval_interval must be >= 1");
    check(eval_episodes >= 1, "eval_episodes must be >= 1");
    check(replay_capacity >= 1, "replay_capacity must be >= 1");
    check(sigma_exact_interval >= 1, "sigma_exact_interval must be >= 1");
    if (!errors.empty()) throw ConfigError(join(errors));
}

bool AgentConfig::operator==(const AgentConfig& other) const { return config_to_json(*this) == config_to_json(other); }

json config_to_json(const AgentConfig& c) {
    return json{{"name", c.name},
                {"env", c.env},
                {"agent", c.agent},
                {"action_repeat", c.action_repeat},
                {"total_env_steps", c.total_env_steps},
                {"seed_steps", c.seed_steps},
                {"eval_interval", c.eval_interval},
                {"eval_episodes", c.eval_episodes},
                {"seed", c.seed},
                {"replay_capacity", c.replay_capacity},
                {"sigma_exact_interval", c.sigma_exact_interval},
                {"save_checkpoint", c.save_checkpoint}};
}

AgentConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    AgentConfig c;
    std::vector<std::string> errors;
    std::optional<SnPolicy> sn_override;
    const std::map<std::string, std::function<void(const json&)>> fields{
        {"name", [&](const json& v) { c.name = v.get<std::string>(); }},
        {"env", [&](const json& v) { c.env = v.get<std::string>(); }},
        {"agent", [&](const json& v) { c.agent = v.get<AgentHyperparams>(); }},
        {"sn_policy", [&](const json& v) { sn_override = parse_sn_policy(v.get<std::string>()); }},
        {"action_repeat", [&](const json& v) { c.action_repeat = v.get<int>(); }},
        {"total_env_steps", [&](const json& v) { c.total_env_steps = v.get<std::int64_t>(); }},
        {"seed_steps", [&](const json& v) { c.seed_steps = v.get<std::int64_t>(); }},
        {"eval_interval", [&](const json& v) { c.eval_interval = v.get<std::int64_t>(); }},
        {"eval_episodes", [&](const json& v) { c.eval_episodes = v.get<int>(); }},
        {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
        {"replay_capacity", [&](const json& v) { c.replay_capacity = v.get<std::size_t>(); }},
        {"sigma_exact_interval", [&](const json& v) { c.sigma_exact_interval = v.get<std::int64_t>(); }},
        {"save_checkpoint", [&](const json& v) { c.save_checkpoint = v.get<bool>(); }},
    };
    for (const auto& [key, value] : j.items()) {
        auto it = fields.find(key);
        if (it == fields.end()) {
            errors.push_back("unknown key '" + key + "'");
            continue;
        }
        try {
            it->second(value);
        } catch (const std::exception& e) {
            errors.push_back(key + ": " + e.what());
        }
    }
    if (!errors.empty()) throw ConfigError(join(errors));

    if (sn_override) {
        c.agent.actor.sn_policy = *sn_override;
        c.agent.critic.sn_policy = *sn_override;
    }
    const json agent_json = j.contains("agent") ? j.at("agent") : json::object();
    if (!agent_json.contains("nstep")) c.agent.nstep = c.agent.algorithm == Algorithm::sac ? 1 : 3;
    if (!agent_json.contains("noise_decay_steps")) c.agent.noise_decay_steps = std::max<std::int64_t>(1, c.total_env_steps / 2);
    if (!agent_json.contains("min_replay")) {
        c.agent.min_replay = static_cast<std::size_t>(std::max<std::int64_t>(1, c.seed_steps / std::max(1, c.action_repeat)));
    }
    c.validate();
    return c;
}

AgentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j);
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
    for (const std::string& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' must be path=value");
        const std::string path = o.substr(0, eq);
        const std::string text = o.substr(eq + 1);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::exception&) {
            value = text;
        }
        std::string pointer = "/";
        for (char ch : path) pointer += ch == '.' ? '/' : ch;
        j[json::json_pointer(pointer)] = value;
    }
}

std::filesystem::path run_root() {
    const char* root = std::getenv("SMOOTHAC_RUN_ROOT");
    return root && *root ? std::filesystem::path(root) : std::filesystem::path("runs");
}

// ---------------------------------------------------------------------------

double evaluate_policy(Agent& agent, const std::string& env_id, int action_repeat, int episodes, std::uint64_t seed) {
    auto env = make_env(env_id);
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        std::vector<double> obs = env->reset(episode_seed(seed, "eval", ep));
        double ret = 0.0;
        while (!env->done()) {
            StepResult r = step_repeated(*env, agent.act_greedy(obs), action_repeat);
            ret += r.reward;
            obs = std::move(r.observation);
        }
        total += ret;
    }
    return total / episodes;
}

std::pair<double, double> random_policy_baseline(const std::string& env_id, int action_repeat, int episodes,
                                                 std::uint64_t seed) {
    auto env = make_env(env_id);
    Rng rng(derive_seed(seed, "baseline"));
    std::vector<double> returns;
    std::vector<double> action(env->spec().action_dim);
    for (int ep = 0; ep < episodes; ++ep) {
        env->reset(episode_seed(seed, "eval", ep));
        double ret = 0.0;
        while (!env->done()) {
            for (double& a : action) a = uniform(rng, -1.0, 1.0);
            ret += step_repeated(*env, action, action_repeat).reward;
        }
        returns.push_back(ret);
    }
    const MeanStderr ms = mean_stderr(returns);
    const double sd = returns.size() > 1 ? ms.stderr_ * std::sqrt(static_cast<double>(returns.size())) : 0.0;
    return {ms.mean, sd};
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
    if (xs.empty()) throw ContractError("mean_stderr: empty sample");
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

RunResult run_experiment(const AgentConfig& config, const std::filesystem::path& run_dir) {
    config.validate();
    std::filesystem::create_directories(run_dir);
    write_text(run_dir / "config.json", config_to_json(config).dump(2) + "\n");

    const auto wall_start = std::chrono::steady_clock::now();
    auto wall = [&wall_start] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    };

    auto env = make_env(config.env);
    const std::size_t obs_dim = env->spec().observation_dim;
    const std::size_t act_dim = env->spec().action_dim;
    Agent agent(config.agent, obs_dim, act_dim, derive_seed(config.seed, "init"), derive_seed(config.seed, "noise"));
    ReplayBuffer replay(config.replay_capacity, derive_seed(config.seed, "replay"));
    Rng explore_rng(derive_seed(config.seed, "explore"));

    const auto sigma_names = sn_layer_names(agent);
    MetricsWriter metrics(run_dir / "metrics.csv", sigma_names);
    std::ofstream sigma_out(run_dir / "sigma.csv", std::ios::binary | std::ios::trunc);
    sigma_out << "step,network,layer,sn_active,sigma_hat,sigma_exact,sigma_effective\n";
    std::ofstream timing_out(run_dir / "timing.csv", std::ios::binary | std::ios::trunc);
    timing_out << "step,wall_seconds\n";

    auto log_sigma = [&](std::int64_t step) {
        auto emit = [&](const Network& net, const std::string& name) {
            for (const SingularValueRow& r : track_singular_values(net, name)) {
                sigma_out << step << ',' << r.network << ',' << r.layer << ',' << (r.sn_active ? 1 : 0) << ','
                          << format_double(r.sigma_hat) << ',' << format_double(r.sigma_exact) << ','
                          << format_double(r.sigma_effective) << '\n';
            }
        };
        emit(agent.actor.net, "actor");
        for (std::size_t k = 0; k < agent.critics.online.size(); ++k) emit(agent.critics.online[k], "critic" + std::to_string(k));
    };

    RunResult result;
    result.run_dir = run_dir;
    std::vector<std::int64_t> eval_steps;
    for (std::int64_t s = 0; s <= config.total_env_steps; s += config.eval_interval) eval_steps.push_back(s);
    if (eval_steps.back() != config.total_env_steps) eval_steps.push_back(config.total_env_steps);
    std::size_t next_eval = 0;

    auto run_evals_up_to = [&](std::int64_t env_step) {
        while (next_eval < eval_steps.size() && eval_steps[next_eval] <= env_step) {
            const double score =
                evaluate_policy(agent, config.env, config.action_repeat, config.eval_episodes, config.seed);
            result.raw_eval.push_back({eval_steps[next_eval], score});
            timing_out << eval_steps[next_eval] << ',' << format_double(wall()) << '\n';
            ++next_eval;
        }
    };

    std::int64_t env_step = 0;
    std::int64_t episode = 0;
    std::int64_t decision = 0;
    std::int64_t update_index = 0;
    std::int64_t next_sigma = 0;
    double episode_return = 0.0;
    std::vector<double> obs = env->reset(episode_seed(config.seed, "env", episode));
    std::vector<double> action(act_dim);
    log_sigma(0);
    next_sigma = config.sigma_exact_interval;
    run_evals_up_to(0);

    while (env_step < config.total_env_steps) {
        if (env->done()) {
            ++episode;
            decision = 0;
            episode_return = 0.0;
            obs = env->reset(episode_seed(config.seed, "env", episode));
        }
        const bool seeding = env_step < config.seed_steps;
        if (config.agent.algorithm == Algorithm::ddpg) {
            agent.noise_std = ddpg_noise_std(env_step, config.agent.noise_std_start, config.agent.noise_std_end,
                                             config.agent.noise_decay_steps);
        }
        if (seeding) {
            for (double& a : action) a = uniform(explore_rng, -1.0, 1.0);
        } else {
            action = agent.explore(obs);
        }

        const int before = env->steps();
        StepResult r = step_repeated(*env, action, config.action_repeat);
        env_step += env->steps() - before;
        episode_return += r.reward;
        replay.push({obs, action, r.reward, r.observation, r.done, episode, decision});
        obs = std::move(r.observation);
        ++decision;

        MetricsRecord rec;
        rec.step = env_step;
        if (!seeding) {
            TrainMetrics m = train_step(agent, replay, update_index);
            if (m.updated) ++update_index;
            rec.updated = m.updated;
            rec.critic_loss = m.critic_loss;
            rec.actor_loss = m.actor_loss;
            rec.alpha_loss = m.alpha_loss;
            rec.alpha = m.alpha;
            rec.critic_grad_norm = m.critic_grad_norm;
            rec.actor_grad_norm = m.actor_grad_norm;
            if (!finite_metrics(m)) {
                rec.event = "crash";
                result.crashed = true;
                result.crash_step = env_step;
            } else {
                result.max_actor_grad_norm = std::max(result.max_actor_grad_norm, m.actor_grad_norm);
                result.max_critic_grad_norm = std::max(result.max_critic_grad_norm, m.critic_grad_norm);
            }
        } else {
            rec.alpha = agent.temperature.alpha();
        }
        rec.sigma_hat = current_sigma_hat(agent);
        if (!result.crashed && env->done()) {
            rec.episode_return = episode_return;
            rec.event = "episode_end";
        }
        metrics.write(rec);
        if (result.crashed) break;

        while (env_step >= next_sigma) {
            log_sigma(env_step);
            next_sigma += config.sigma_exact_interval;
        }
        run_evals_up_to(env_step);
    }
    metrics.flush();

    result.env_steps = env_step;
    result.updates = update_index;
    std::vector<EvalPoint> scheduled;
    for (std::int64_t s : eval_steps) {
        double score = 0.0;
        for (const EvalPoint& p : result.raw_eval) {
            if (p.step == s) score = p.score;
        }
        scheduled.push_back({s, score});
    }
    result.eval = crash_hold(scheduled, result.crash_step);
    result.final_return = result.eval.empty() ? 0.0 : result.eval.back().score;

    {
        std::ofstream eval_out(run_dir / "eval.csv", std::ios::binary | std::ios::trunc);
        eval_out << "step,score,raw_score\n";
        for (const EvalPoint& p : result.eval) {
            eval_out << p.step << ',' << format_double(p.score) << ',';
            for (const EvalPoint& q : result.raw_eval) {
                if (q.step == p.step) eval_out << format_double(q.score);
            }
            eval_out << '\n';
        }
    }
    if (config.save_checkpoint && !result.crashed) {
        Checkpoint ckpt;
        agent.save(ckpt);
        ckpt.meta["config"] = config_to_json(config);
        ckpt.save(run_dir / "agent.ckpt");
    }
    json summary{{"final_return", result.final_return},
                 {"crashed", result.crashed},
                 {"crash_step", result.crash_step ? json(*result.crash_step) : json()},
                 {"env_steps", result.env_steps},
                 {"updates", result.updates},
                 {"max_actor_grad_norm", result.max_actor_grad_norm},
                 {"max_critic_grad_norm", result.max_critic_grad_norm}};
    write_text(run_dir / "summary.json", summary.dump(2) + "\n");
    timing_out << "end," << format_double(wall()) << '\n';
    return result;
}

// ---------------------------------------------------------------------------

MatrixConfig parse_matrix_config(const json& j) {
    if (!j.is_object()) throw ConfigError("matrix config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key != "template" && key != "axes") throw ConfigError("unknown matrix key '" + key + "'");
    }
    MatrixConfig m;
    m.base = parse_config(j.contains("template") ? j.at("template") : json::object());
    if (j.contains("axes")) {
        const json& a = j.at("axes");
        std::vector<std::string> errors;
        for (const auto& [key, value] : a.items()) {
            try {
                if (key == "kind") {
                    m.axes.kinds.clear();
                    for (const auto& v : value) m.axes.kinds.push_back(parse_network_kind(v.get<std::string>()));
                } else if (key == "depth") {
                    m.axes.depths = value.get<std::vector<int>>();
                } else if (key == "sn") {
                    m.axes.sn.clear();
                    for (const auto& v : value) m.axes.sn.push_back(parse_sn_policy(v.get<std::string>()));
                } else if (key == "seeds") {
                    m.axes.seeds = value.get<std::vector<std::uint64_t>>();
                } else {
                    errors.push_back("unknown axis '" + key + "'");
                }
            } catch (const std::exception& e) {
                errors.push_back("axis " + key + ": " + e.what());
            }
        }
        if (m.axes.kinds.empty() || m.axes.depths.empty() || m.axes.sn.empty() || m.axes.seeds.empty()) {
            errors.push_back("every axis needs at least one value");
        }
        if (!errors.empty()) throw ConfigError(join(errors));
    }
    return m;
}

std::vector<MatrixCell> run_matrix(const MatrixConfig& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<MatrixCell> cells;
    for (NetworkKind kind : config.axes.kinds) {
        for (int depth : config.axes.depths) {
            for (SnPolicy sn : config.axes.sn) {
                MatrixCell cell{kind, depth, sn, {}, 0, {}};
                const std::string cell_name = to_string(kind) + "_d" + std::to_string(depth) + "_sn-" +
                                              (sn == SnPolicy::intermediate ? "on" : "off");
                for (std::uint64_t seed : config.axes.seeds) {
                    AgentConfig c = config.base;
                    c.agent.actor.kind = kind;
                    c.agent.critic.kind = kind;
                    c.agent.critic.depth = depth;
                    c.agent.actor.sn_policy = sn;
                    c.agent.critic.sn_policy = sn;
                    c.seed = seed;
                    c.name = cell_name;
                    try {
                        RunResult r = run_experiment(c, out_dir / cell_name / ("seed_" + std::to_string(seed)));
                        cell.final_returns.push_back(r.final_return);
                        if (r.crashed) ++cell.crashes;
                    } catch (const ConfigError&) {
                        throw;
                    } catch (const std::exception&) {
                        cell.final_returns.push_back(0.0);
                        ++cell.crashes;
                    }
                }
                cell.summary = mean_stderr(cell.final_returns);
                cells.push_back(std::move(cell));
            }
        }
    }
    CsvTable table;
    table.columns = {"kind", "depth", "sn", "seeds", "mean_return", "stderr", "crashes"};
    for (const MatrixCell& c : cells) {
        table.rows.push_back({to_string(c.kind), std::to_string(c.depth), c.sn == SnPolicy::intermediate ? "on" : "off",
                              std::to_string(c.final_returns.size()), format_double(c.summary.mean),
                              format_double(c.summary.stderr_), std::to_string(c.crashes)});
    }
    write_csv(out_dir / "summary.csv", table);
    return cells;
}

}  // namespace smoothac
