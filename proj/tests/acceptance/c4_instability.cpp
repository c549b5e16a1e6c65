#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "criteria.hpp"
#include "smoothac/agents.hpp"
#include "smoothac/replay.hpp"

namespace acceptance {
namespace {

using namespace smoothac;

// Offline actor-critic on a fixed random dataset: the actor climbs the critic
// toward actions the data never covers, and bootstrapping feeds the error back.
constexpr std::size_t kObsDim = 6;
constexpr std::size_t kActionDim = 2;
constexpr std::size_t kDatasetSize = 2048;
constexpr int kCriticDepth = 4;
constexpr int kWidth = 32;
constexpr int kFfnWidth = 64;
constexpr std::size_t kBatch = 64;
constexpr double kBehaviorStd = 0.1;
constexpr std::int64_t kSteps = 20000;
constexpr int kSeeds = 5;
constexpr double kRatio = 10.0;
constexpr int kRequiredSeeds = 4;

struct RunStats {
    double max_actor_grad = 0.0;
    bool crashed = false;
};

ReplayBuffer make_dataset(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "dataset"));
    ReplayBuffer replay(kDatasetSize, derive_seed(seed, "replay"));
    for (std::size_t i = 0; i < kDatasetSize; ++i) {
        Transition t;
        for (std::size_t d = 0; d < kObsDim; ++d) t.obs.push_back(standard_normal(rng));
        for (std::size_t d = 0; d < kActionDim; ++d) t.action.push_back(kBehaviorStd * standard_normal(rng));
        t.reward = uniform(rng, 0.0, 1.0);
        for (std::size_t d = 0; d < kObsDim; ++d) t.next_obs.push_back(standard_normal(rng));
        t.episode = static_cast<std::int64_t>(i);
        replay.push(std::move(t));
    }
    return replay;
}

RunStats run(std::uint64_t seed, bool sn) {
    AgentHyperparams h;
    h.algorithm = Algorithm::sac;
    h.actor = NetworkSpec{NetworkKind::mlp, 2, kWidth, kFfnWidth, sn ? SnPolicy::intermediate : SnPolicy::none, 1};
    h.critic = NetworkSpec{NetworkKind::modern, kCriticDepth, kWidth, kFfnWidth,
                           sn ? SnPolicy::intermediate : SnPolicy::none, 1};
    h.batch_size = kBatch;
    h.min_replay = kBatch;
    Agent agent(h, kObsDim, kActionDim, derive_seed(seed, "init"), derive_seed(seed, "noise"));
    ReplayBuffer replay = make_dataset(seed);
    RunStats stats;
    for (std::int64_t step = 0; step < kSteps; ++step) {
        const TrainMetrics m = train_step(agent, replay, step);
        if (!std::isfinite(m.actor_grad_norm) || !std::isfinite(m.critic_loss)) {
            stats.crashed = true;
            break;
        }
        stats.max_actor_grad = std::max(stats.max_actor_grad, m.actor_grad_norm);
    }
    return stats;
}

}  // namespace

Outcome instability_replication() {
    int separated = 0;
    std::string detail;
    for (int s = 0; s < kSeeds; ++s) {
        const std::uint64_t seed = 100 + static_cast<std::uint64_t>(s);
        const RunStats off = run(seed, false);
        const RunStats on = run(seed, true);
        const bool ok = off.crashed || off.max_actor_grad >= kRatio * on.max_actor_grad;
        separated += ok ? 1 : 0;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%sseed %llu: no-sn %s%.3g vs sn %.3g", s ? "; " : "",
                      static_cast<unsigned long long>(seed),
                      off.crashed ? "crash/" : "", off.max_actor_grad, on.max_actor_grad);
        detail += buf;
    }
    char head[96];
    std::snprintf(head, sizeof head, "max actor grad ratio >= %.0fx in %d/%d seeds (need %d); ", kRatio, separated,
                  kSeeds, kRequiredSeeds);
    return {separated >= kRequiredSeeds, head + detail};
}

}  // namespace acceptance
