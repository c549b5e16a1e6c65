#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "smoothac/agents.hpp"
#include "smoothac/checkpoint.hpp"
#include "smoothac/diagnostics.hpp"
#include "smoothac/runner.hpp"
#include "smoothac/specnorm.hpp"

namespace {

using json = nlohmann::json;
using namespace smoothac;

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

json network_report(Network& net, const std::string& name) {
    json rows = json::array();
    for (const SingularValueRow& r : track_singular_values(net, name)) {
        rows.push_back({{"layer", r.layer},
                        {"sn_active", r.sn_active},
                        {"sigma_hat", r.sigma_hat},
                        {"sigma_exact", r.sigma_exact},
                        {"sigma_effective", r.sigma_effective}});
    }
    const LipschitzReport lip = lipschitz_bound(net);
    json factors = json::array();
    for (const LipschitzFactor& f : lip.factors) factors.push_back(json{{"layer", f.layer}, {"factor", f.factor}});
    return {{"network", name},
            {"spec", net.spec()},
            {"parameters", net.parameter_count()},
            {"layers", rows},
            {"lipschitz_ignoring_norm", lip.ignoring_norm},
            {"lipschitz_conservative", lip.conservative},
            {"lipschitz_factors", factors}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Actor-critic training with spectrally normalized heads"};
    app.require_subcommand(1);

    std::string train_config;
    std::string train_out;
    std::vector<std::string> train_set;
    auto* train = app.add_subcommand("train", "Run one experiment");
    train->add_option("config", train_config, "JSON config file")->required();
    train->add_option("--out", train_out, "Run directory (default: $SMOOTHAC_RUN_ROOT/<name>_seed<seed>)");
    train->add_option("--set", train_set, "Override a field by dotted path, e.g. agent.critic.depth=4");

    std::string matrix_config;
    std::string matrix_out;
    auto* matrix = app.add_subcommand("matrix", "Run an architecture x SN x seed matrix");
    matrix->add_option("config", matrix_config, "JSON matrix config file")->required();
    matrix->add_option("--out", matrix_out, "Output directory (default: $SMOOTHAC_RUN_ROOT/matrix)");

    std::string diag_ckpt;
    auto* diagnose = app.add_subcommand("diagnose", "Singular-value and Lipschitz report for a checkpoint");
    diagnose->add_option("checkpoint", diag_ckpt, "Agent checkpoint")->required();

    std::string eval_ckpt;
    int eval_episodes = 10;
    std::uint64_t eval_seed = 0;
    auto* eval = app.add_subcommand("eval", "Evaluate the greedy policy of a checkpoint");
    eval->add_option("checkpoint", eval_ckpt, "Agent checkpoint")->required();
    eval->add_option("--episodes", eval_episodes, "Number of episodes")->check(CLI::PositiveNumber);
    eval->add_option("--seed", eval_seed, "Evaluation seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            json j = read_json(train_config);
            apply_overrides(j, train_set);
            const AgentConfig config = parse_config(j);
            const std::filesystem::path dir =
                train_out.empty() ? run_root() / (config.name + "_seed" + std::to_string(config.seed)) : std::filesystem::path(train_out);
            const RunResult r = run_experiment(config, dir);
            std::cout << "run_dir " << r.run_dir.string() << "\nfinal_return " << format_double(r.final_return)
                      << "\nupdates " << r.updates << "\ncrashed " << (r.crashed ? 1 : 0) << "\n";
            return r.crashed ? 2 : 0;
        }
        if (*matrix) {
            const MatrixConfig config = parse_matrix_config(read_json(matrix_config));
            const std::filesystem::path dir = matrix_out.empty() ? run_root() / "matrix" : std::filesystem::path(matrix_out);
            const auto cells = run_matrix(config, dir);
            int crashes = 0;
            for (const MatrixCell& c : cells) {
                std::cout << to_string(c.kind) << " depth=" << c.depth
                          << " sn=" << (c.sn == SnPolicy::intermediate ? "on" : "off") << " return "
                          << format_double(c.summary.mean) << " +- " << format_double(c.summary.stderr_)
                          << " crashes " << c.crashes << "\n";
                crashes += c.crashes;
            }
            std::cout << "summary " << (dir / "summary.csv").string() << "\n";
            return crashes > 0 ? 2 : 0;
        }
        if (*diagnose) {
            Agent agent = Agent::load(Checkpoint::load(diag_ckpt));
            json report = json::array();
            report.push_back(network_report(agent.actor.net, "actor"));
            for (std::size_t k = 0; k < agent.critics.online.size(); ++k) {
                report.push_back(network_report(agent.critics.online[k], "critic" + std::to_string(k)));
            }
            std::cout << report.dump(2) << "\n";
            return 0;
        }
        if (*eval) {
            const Checkpoint ckpt = Checkpoint::load(eval_ckpt);
            if (!ckpt.meta.contains("config")) throw ConfigError("checkpoint carries no run config");
            const AgentConfig config = parse_config(ckpt.meta.at("config"));
            Agent agent = Agent::load(ckpt);
            const double score = evaluate_policy(agent, config.env, config.action_repeat, eval_episodes, eval_seed);
            std::cout << "env " << config.env << "\nepisodes " << eval_episodes << "\nmean_return "
                      << format_double(score) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
