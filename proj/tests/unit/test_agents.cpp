#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "smoothac/agents.hpp"
#include "smoothac/checkpoint.hpp"
#include "smoothac/diagnostics.hpp"
#include "smoothac/specnorm.hpp"
#include "support/gradcheck.hpp"

using namespace smoothac;

namespace {

AgentHyperparams small(Algorithm algo, int critics = 2, SnPolicy sn = SnPolicy::none) {
    AgentHyperparams h;
    h.algorithm = algo;
    h.actor = NetworkSpec{NetworkKind::mlp, 2, 8, 8, sn, 1};
    h.critic = NetworkSpec{NetworkKind::modern, 2, 8, 12, sn, 1};
    h.num_critics = critics;
    h.batch_size = 6;
    h.min_replay = 6;
    return h;
}

void randomize(Network& net, Rng& rng, double scale = 0.4) {
    for (Parameter* p : net.parameters()) {
        for (double& x : p->value.data()) x += scale * standard_normal(rng);
    }
}

Batch random_batch(std::size_t b, std::size_t obs, std::size_t act, Rng& rng) {
    Batch batch;
    batch.obs = normal_tensor({b, obs}, rng);
    batch.action = Tensor({b, act});
    for (double& a : batch.action.data()) a = uniform(rng, -1.0, 1.0);
    batch.reward = normal_tensor({b}, rng);
    batch.next_obs = normal_tensor({b, obs}, rng);
    batch.discount = Tensor({b});
    batch.done = Tensor({b});
    for (std::size_t i = 0; i < b; ++i) {
        batch.horizon.push_back(1 + static_cast<int>(i % 3));
        batch.discount[i] = std::pow(0.99, batch.horizon.back());
        batch.done[i] = i % 4 == 3 ? 1.0 : 0.0;
    }
    return batch;
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& ps) {
    std::vector<Tensor> out;
    for (const Parameter* p : ps) out.push_back(p->value);
    return out;
}

bool same(const std::vector<Parameter*>& ps, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!(ps[i]->value == snap[i])) return false;
    }
    return true;
}

ReplayBuffer filled_replay(std::size_t n, std::size_t obs, std::size_t act, Rng& rng) {
    ReplayBuffer r(n + 10, rng());
    for (std::size_t i = 0; i < n; ++i) {
        Transition t;
        for (std::size_t d = 0; d < obs; ++d) {
            t.obs.push_back(standard_normal(rng));
            t.next_obs.push_back(standard_normal(rng));
        }
        for (std::size_t d = 0; d < act; ++d) t.action.push_back(uniform(rng, -1.0, 1.0));
        t.reward = uniform(rng, 0.0, 1.0);
        t.episode = static_cast<std::int64_t>(i / 5);
        t.step = static_cast<std::int64_t>(i % 5);
        r.push(std::move(t));
    }
    return r;
}

// Actor whose outputs are the constant vector [mu | log_std].
void set_constant_actor(Policy& policy, const std::vector<double>& mu, const std::vector<double>& log_std) {
    LinearLayer& out = policy.net.output_layer();
    out.weight.value.fill(0.0);
    for (std::size_t j = 0; j < mu.size(); ++j) {
        out.bias.value[j] = mu[j];
        out.bias.value[mu.size() + j] = log_std[j];
    }
}

}  // namespace

TEST(SacSampling, CollapsedNoiseGivesTanhOfMean) {
    Agent agent(small(Algorithm::sac), 3, 2, 1, 2);
    set_constant_actor(agent.actor, {0.0, 0.0}, {-50.0, -50.0});
    Graph g;
    const Tensor eps = Tensor::matrix({{3.0, -2.0}});
    SacSample s = sample_action_sac(g, agent.actor, g.constant(Tensor::matrix({{0.1, 0.2, 0.3}})), eps);
    EXPECT_NEAR(g.value(s.action)[0], 3.0 * std::exp(-10.0), 1e-12);
    EXPECT_LT(std::abs(g.value(s.action)[1]), 1e-4);
}

TEST(SacSampling, StandardGaussianAtZero) {
    Agent agent(small(Algorithm::sac), 3, 2, 1, 2);
    set_constant_actor(agent.actor, {0.0, 0.0}, {0.0, 0.0});
    Graph g;
    SacSample s = sample_action_sac(g, agent.actor, g.constant(Tensor::matrix({{1.0, -1.0, 0.5}})),
                                    Tensor::matrix({{0.0, 0.0}}));
    EXPECT_NEAR(g.value(s.log_prob)[0], -std::log(2.0 * std::numbers::pi) - 2.0 * std::log1p(1e-6), 1e-12);
}

TEST(SacSampling, LogProbMatchesTransformedDensity) {
    Agent agent(small(Algorithm::sac), 3, 1, 1, 2);
    set_constant_actor(agent.actor, {0.3}, {-0.7});
    const double eps = 0.8;
    Graph g;
    SacSample s = sample_action_sac(g, agent.actor, g.constant(Tensor::matrix({{0.0, 0.0, 0.0}})),
                                    Tensor::matrix({{eps}}));
    const double sigma = std::exp(-0.7);
    const double u = 0.3 + sigma * eps;
    const double a = std::tanh(u);
    const double gauss = std::exp(-0.5 * eps * eps) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    EXPECT_NEAR(g.value(s.action)[0], a, 1e-15);
    EXPECT_NEAR(g.value(s.log_prob)[0], std::log(gauss) - std::log(1.0 - a * a + 1e-6), 1e-12);
}

TEST(SacSampling, ExtremeMeansStayBoundedWithFiniteLogProb) {
    Agent agent(small(Algorithm::sac), 3, 2, 1, 2);
    Rng rng(3);
    for (double mu : {100.0, -100.0}) {
        set_constant_actor(agent.actor, {mu, -mu}, {1.0, 2.0});
        Graph g;
        const Tensor obs(Shape{100000, 3}, 0.0);
        SacSample s = sample_action_sac(g, agent.actor, g.constant(obs), rng);
        const Tensor& a = g.value(s.action);
        EXPECT_LE(*std::max_element(a.data().begin(), a.data().end()), 1.0);
        EXPECT_GE(*std::min_element(a.data().begin(), a.data().end()), -1.0);
        EXPECT_TRUE(g.value(s.log_prob).all_finite());
    }
}

TEST(DdpgSampling, ZeroNoiseIsDeterministicTanh) {
    Agent agent(small(Algorithm::ddpg), 3, 2, 1, 2);
    Rng rng(4);
    randomize(agent.actor.net, rng);
    const Tensor obs = normal_tensor({5, 3}, rng);
    const Tensor out = agent.actor.net.predict(obs);
    const Tensor a = sample_action_ddpg(agent.actor, obs, 0.0, rng);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(a(i, j), std::tanh(out(i, j)));
    }
}

TEST(DdpgSampling, NoiseStdMatchesMonteCarlo) {
    Agent agent(small(Algorithm::ddpg), 3, 1, 1, 2);
    set_constant_actor(agent.actor, {0.0}, {0.0});
    Rng rng(5);
    const Tensor a = sample_action_ddpg(agent.actor, Tensor(Shape{100000, 3}, 0.0), 0.1, rng);
    double s = 0.0, ss = 0.0;
    for (double x : a.data()) {
        s += x;
        ss += x * x;
    }
    const double n = static_cast<double>(a.size());
    const double sd = std::sqrt((ss - s * s / n) / (n - 1));
    EXPECT_NEAR(sd, 0.1, 0.002);
}

TEST(DdpgSampling, LargeNoiseIsClipped) {
    Agent agent(small(Algorithm::ddpg), 3, 1, 1, 2);
    set_constant_actor(agent.actor, {std::atanh(0.99)}, {0.0});
    Rng rng(6);
    const Tensor a = sample_action_ddpg(agent.actor, Tensor(Shape{1000, 3}, 0.0), 10.0, rng);
    for (double x : a.data()) {
        EXPECT_LE(x, 1.0);
        EXPECT_GE(x, -1.0);
    }
    EXPECT_THROW(sample_action_ddpg(agent.actor, Tensor(Shape{1, 3}, 0.0), -0.1, rng), ContractError);
}

TEST(DdpgSampling, NoiseScheduleDecaysLinearly) {
    EXPECT_DOUBLE_EQ(ddpg_noise_std(0, 0.2, 0.05, 100), 0.2);
    EXPECT_DOUBLE_EQ(ddpg_noise_std(50, 0.2, 0.05, 100), 0.125);
    EXPECT_DOUBLE_EQ(ddpg_noise_std(100, 0.2, 0.05, 100), 0.05);
    EXPECT_DOUBLE_EQ(ddpg_noise_std(1000, 0.2, 0.05, 100), 0.05);
}

TEST(CriticLoss, ZeroWhenTargetsEqualQ) {
    Agent agent(small(Algorithm::sac, 1), 3, 2, 7, 8);
    Rng rng(9);
    randomize(agent.critics.online[0], rng);
    Batch batch = random_batch(6, 3, 2, rng);
    batch.reward.fill(0.0);
    const Tensor q = agent.critics.online[0].predict(critic_input(batch.action, batch.obs));
    Tensor bootstrap;
    {
        Rng noise(10);
        Graph g;
        bootstrap = critic_loss(g, agent, batch, noise).target;
    }
    for (std::size_t i = 0; i < 6; ++i) batch.reward[i] = q[i] - bootstrap[i];
    Rng noise(10);
    Graph g;
    EXPECT_NEAR(g.value(critic_loss(g, agent, batch, noise).loss).item(), 0.0, 1e-12);
}

TEST(CriticLoss, SingleTransitionAnalytic) {
    Agent agent(small(Algorithm::sac), 3, 2, 7, 8);
    for (Network& n : agent.critics.online) {
        n.output_layer().weight.value.fill(0.0);
        n.output_layer().bias.value.fill(0.0);
    }
    Batch batch;
    batch.obs = Tensor::matrix({{0.1, 0.2, 0.3}});
    batch.action = Tensor::matrix({{0.5, -0.5}});
    batch.reward = Tensor::vector({1.0});
    batch.next_obs = Tensor::matrix({{0.0, 0.0, 0.0}});
    batch.discount = Tensor::vector({0.0});
    batch.done = Tensor::vector({0.0});
    batch.horizon = {1};
    Rng noise(1);
    Graph g;
    EXPECT_NEAR(g.value(critic_loss(g, agent, batch, noise).loss).item(), 1.0, 1e-15);
}

TEST(CriticLoss, EmptyBatchRejected) {
    Agent agent(small(Algorithm::sac), 3, 2, 7, 8);
    Batch batch;
    Rng noise(1);
    Graph g;
    EXPECT_THROW(critic_loss(g, agent, batch, noise), ContractError);
}

class CriticLossOracle : public ::testing::TestWithParam<Algorithm> {};

TEST_P(CriticLossOracle, MatchesScalarLoop) {
    const Algorithm algo = GetParam();
    Agent agent(small(algo), 3, 2, 11, 12);
    Rng rng(13);
    randomize(agent.actor.net, rng);
    for (Network& n : agent.critics.online) randomize(n, rng);
    for (Network& n : agent.critics.target) randomize(n, rng);
    agent.temperature.log_alpha.value[0] = std::log(0.3);
    agent.noise_std = 0.25;
    const Batch batch = random_batch(7, 3, 2, rng);

    Rng noise(14);
    Graph g;
    const double loss = g.value(critic_loss(g, agent, batch, noise).loss).item();

    Rng replay_noise(14);
    const std::size_t b = 7;
    Tensor eps({b, 2});
    if (algo == Algorithm::sac) {
        eps = normal_tensor({b, 2}, replay_noise);
    } else {
        for (double& e : eps.data()) e = standard_normal(replay_noise);
    }
    const Tensor head = agent.actor.net.predict(batch.next_obs);
    double expected = 0.0;
    std::vector<double> target(b);
    for (std::size_t i = 0; i < b; ++i) {
        double next_a[2];
        double logp = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            const double mu = head(i, j);
            if (algo == Algorithm::sac) {
                const double ls = std::clamp(head(i, 2 + j), -10.0, 2.0);
                const double u = mu + std::exp(ls) * eps(i, j);
                next_a[j] = std::tanh(u);
                logp += -0.5 * eps(i, j) * eps(i, j) - 0.5 * std::log(2.0 * std::numbers::pi) - ls -
                        std::log(1.0 - next_a[j] * next_a[j] + 1e-6);
            } else {
                next_a[j] = std::clamp(std::tanh(mu) + 0.25 * eps(i, j), -1.0, 1.0);
            }
        }
        Tensor in(Shape{1, 5});
        in[0] = next_a[0];
        in[1] = next_a[1];
        for (std::size_t d = 0; d < 3; ++d) in[2 + d] = batch.next_obs(i, d);
        double qmin = 1e300;
        for (Network& t : agent.critics.target) qmin = std::min(qmin, t.predict(in)[0]);
        const double soft = algo == Algorithm::sac ? qmin - 0.3 * logp : qmin;
        target[i] = batch.reward[i] + batch.discount[i] * (1.0 - batch.done[i]) * soft;
    }
    for (Network& n : agent.critics.online) {
        double mse = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            Tensor in(Shape{1, 5});
            in[0] = batch.action(i, 0);
            in[1] = batch.action(i, 1);
            for (std::size_t d = 0; d < 3; ++d) in[2 + d] = batch.obs(i, d);
            const double e = n.predict(in)[0] - target[i];
            mse += e * e / static_cast<double>(b);
        }
        expected += mse / 2.0;
    }
    EXPECT_NEAR(loss, expected, 1e-10 * std::max(1.0, std::abs(expected)));
}

INSTANTIATE_TEST_SUITE_P(Algorithms, CriticLossOracle, ::testing::Values(Algorithm::sac, Algorithm::ddpg));

TEST(ActorLoss, ConstantCriticGivesZeroDdpgGradient) {
    Agent agent(small(Algorithm::ddpg), 3, 2, 1, 2);
    for (Network& n : agent.critics.online) {
        n.output_layer().weight.value.fill(0.0);
        n.output_layer().bias.value.fill(2.5);
    }
    Rng rng(3);
    auto params = agent.actor_parameters();
    for (Parameter* p : params) p->zero_grad();
    Graph g;
    ActorLoss al = actor_loss(g, agent, normal_tensor({4, 3}, rng), rng);
    g.backward(al.loss);
    EXPECT_DOUBLE_EQ(g.value(al.loss).item(), -2.5);
    for (Parameter* p : params) {
        for (double x : p->grad.data()) EXPECT_EQ(x, 0.0);
    }
}

TEST(ActorLoss, AbsoluteValueCriticPullsActionToZero) {
    // Q(a, s) = -|a_0| built from two ReLU units; DDPG gradient descent moves tanh(mu) toward 0.
    AgentHyperparams h = small(Algorithm::ddpg, 1);
    h.critic = NetworkSpec{NetworkKind::mlp, 1, 2, 1, SnPolicy::none, 1};
    h.adam.lr = 1e-2;
    Agent agent(h, 1, 1, 1, 2);
    Network& q = agent.critics.online[0];
    q.input_layer().weight.value = Tensor::matrix({{1.0, 0.0}, {-1.0, 0.0}});
    q.input_layer().bias.value.fill(0.0);
    q.output_layer().weight.value = Tensor::matrix({{-1.0, -1.0}});
    q.output_layer().bias.value.fill(0.0);
    set_constant_actor(agent.actor, {0.8}, {0.0});
    const Tensor obs = Tensor::matrix({{0.0}, {0.0}});
    Rng rng(1);

    Parameter& mu_bias = agent.actor.net.output_layer().bias;
    auto loss_value = [&] {
        Graph g;
        return g.value(actor_loss(g, agent, obs, rng).loss).item();
    };
    for (Parameter* p : agent.actor_parameters()) p->zero_grad();
    {
        Graph g;
        g.backward(actor_loss(g, agent, obs, rng).loss);
    }
    const auto r = smoothac::testing::check_gradients({&mu_bias}, loss_value);
    EXPECT_LT(r.worst_rel_error, 1e-4);
    EXPECT_GT(mu_bias.grad[0], 0.0);

    const double before = std::abs(mean_action(agent.actor, obs)[0]);
    for (int i = 0; i < 20; ++i) {
        auto params = agent.actor_parameters();
        for (Parameter* p : params) p->zero_grad();
        Graph g;
        g.backward(actor_loss(g, agent, obs, rng).loss);
        agent.actor_opt.step(params);
    }
    EXPECT_LT(std::abs(mean_action(agent.actor, obs)[0]), before);
}

TEST(ActorLoss, SacWithZeroTemperatureIsNegativeMinQ) {
    Agent agent(small(Algorithm::sac), 3, 2, 1, 2);
    Rng rng(5);
    randomize(agent.actor.net, rng);
    for (Network& n : agent.critics.online) randomize(n, rng);
    agent.temperature.log_alpha.value[0] = -1000.0;
    ASSERT_EQ(agent.temperature.alpha(), 0.0);
    const Tensor obs = normal_tensor({5, 3}, rng);

    Rng noise(6);
    Graph g;
    const double loss = g.value(actor_loss(g, agent, obs, noise).loss).item();

    Rng replay(6);
    Graph g2;
    SacSample s = sample_action_sac(g2, agent.actor, g2.constant(obs), replay, ParamMode::frozen);
    const Tensor input = critic_input(g2.value(s.action), obs);
    const Tensor q0 = agent.critics.online[0].predict(input);
    const Tensor q1 = agent.critics.online[1].predict(input);
    double expected = 0.0;
    for (std::size_t i = 0; i < 5; ++i) expected -= std::min(q0[i], q1[i]) / 5.0;
    EXPECT_NEAR(loss, expected, 1e-12);
}

TEST(ActorLoss, CriticParametersReceiveNoGradient) {
    Agent agent(small(Algorithm::sac), 3, 2, 1, 2);
    Rng rng(7);
    for (Parameter* p : agent.critic_parameters()) p->grad = Tensor();
    Graph g;
    g.backward(actor_loss(g, agent, normal_tensor({4, 3}, rng), rng).loss);
    for (Parameter* p : agent.critic_parameters()) EXPECT_FALSE(p->has_grad());
}

TEST(Temperature, FixedPointHasZeroGradient) {
    Temperature t;
    t.log_alpha.value[0] = std::log(0.1);
    t.target_entropy = -2.0;
    t.log_alpha.zero_grad();
    Graph g;
    g.backward(temperature_loss(g, t, Tensor::vector({1.5, 2.5})));
    EXPECT_EQ(t.log_alpha.grad[0], 0.0);
}

TEST(Temperature, AlphaGrowsWhenLogProbAboveFixedPoint) {
    Temperature t;
    t.log_alpha.value[0] = std::log(0.1);
    t.target_entropy = -2.0;
    Adam opt(AdamConfig{});
    const double before = t.alpha();
    t.log_alpha.zero_grad();
    Graph g;
    g.backward(temperature_loss(g, t, Tensor::vector({3.0, 4.0})));
    opt.step({&t.log_alpha});
    EXPECT_GT(t.alpha(), before);
}

TEST(Temperature, GradientMatchesFiniteDifferences) {
    Temperature t;
    t.log_alpha.value[0] = -0.4;
    t.target_entropy = -1.0;
    const Tensor lp = Tensor::vector({0.3, -1.2, 2.2});
    t.log_alpha.zero_grad();
    {
        Graph g;
        g.backward(temperature_loss(g, t, lp));
    }
    const auto r = smoothac::testing::check_gradients({&t.log_alpha}, [&] {
        Graph g;
        return g.value(temperature_loss(g, t, lp)).item();
    });
    EXPECT_LT(r.worst_rel_error, 1e-6);
}

TEST(Targets, HalfStepAveragesAnalytically) {
    Agent agent(small(Algorithm::sac), 3, 2, 1, 2);
    for (Network& n : agent.critics.online) {
        for (Parameter* p : n.parameters()) p->value.fill(2.0);
    }
    for (Network& n : agent.critics.target) {
        for (Parameter* p : n.parameters()) p->value.fill(0.0);
    }
    update_targets(agent.critics, 0.5);
    for (Network& n : agent.critics.target) {
        for (Parameter* p : n.parameters()) {
            for (double x : p->value.data()) EXPECT_EQ(x, 1.0);
        }
    }
}

TEST(Targets, UseEffectiveWeightsAndMatchCounts) {
    Agent agent(small(Algorithm::sac, 2, SnPolicy::intermediate), 3, 2, 1, 2);
    Rng rng(8);
    for (Network& n : agent.critics.online) randomize(n, rng);
    update_targets(agent.critics, 1.0);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(agent.critics.target[k].parameter_count(), agent.critics.online[k].parameter_count());
        const auto online = agent.critics.online[k].linear_layers();
        const auto target = agent.critics.target[k].linear_layers();
        for (std::size_t i = 0; i < online.size(); ++i) EXPECT_EQ(target[i]->weight.value, online[i]->effective_weight());
    }
    EXPECT_THROW(update_targets(agent.critics, 1.5), ContractError);
}

TEST(TrainStep, NoOpBelowMinimumReplay) {
    Agent agent(small(Algorithm::sac), 3, 2, 1, 2);
    Rng rng(9);
    ReplayBuffer replay = filled_replay(5, 3, 2, rng);
    const auto actor = snapshot(agent.actor_parameters());
    const auto critic = snapshot(agent.critic_parameters());
    const TrainMetrics m = train_step(agent, replay, 0);
    EXPECT_FALSE(m.updated);
    EXPECT_TRUE(same(agent.actor_parameters(), actor));
    EXPECT_TRUE(same(agent.critic_parameters(), critic));
    EXPECT_EQ(agent.updates, 0);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersBitwise) {
    for (Algorithm algo : {Algorithm::sac, Algorithm::ddpg}) {
        AgentHyperparams h = small(algo, 2, SnPolicy::intermediate);
        h.adam.lr = 0.0;
        Agent agent(h, 3, 2, 1, 2);
        Rng rng(10);
        ReplayBuffer replay = filled_replay(40, 3, 2, rng);
        const auto actor = snapshot(agent.actor_parameters());
        const auto critic = snapshot(agent.critic_parameters());
        const Tensor log_alpha = agent.temperature.log_alpha.value;
        for (std::int64_t s = 0; s < 6; ++s) {
            const TrainMetrics m = train_step(agent, replay, s);
            ASSERT_TRUE(m.updated);
            EXPECT_TRUE(std::isfinite(m.critic_loss));
            EXPECT_TRUE(std::isfinite(m.actor_loss));
        }
        EXPECT_TRUE(same(agent.actor_parameters(), actor));
        EXPECT_TRUE(same(agent.critic_parameters(), critic));
        EXPECT_EQ(agent.temperature.log_alpha.value, log_alpha);
    }
}

TEST(TrainStep, ScheduleAndHeadIsolation) {
    Agent agent(small(Algorithm::sac, 2, SnPolicy::intermediate), 3, 2, 1, 2);
    Rng rng(11);
    ReplayBuffer replay = filled_replay(40, 3, 2, rng);
    for (std::int64_t s = 0; s < 8; ++s) {
        const auto actor = snapshot(agent.actor_parameters());
        const auto critic = snapshot(agent.critic_parameters());
        const TrainMetrics m = train_step(agent, replay, s);
        EXPECT_TRUE(m.updated);
        EXPECT_EQ(m.actor_updated, s % 2 == 0);
        EXPECT_EQ(m.targets_updated, s % 2 == 0);
        EXPECT_FALSE(same(agent.critic_parameters(), critic));
        EXPECT_EQ(same(agent.actor_parameters(), actor), !m.actor_updated);
        EXPECT_GT(m.critic_grad_norm, 0.0);
        if (m.actor_updated) EXPECT_GT(m.actor_grad_norm, 0.0);
        EXPECT_FALSE(m.sigma_hat.empty());
    }
    EXPECT_EQ(agent.updates, 8);
}

TEST(TrainStep, ActorStepLeavesCriticBitwise) {
    Agent agent(small(Algorithm::ddpg), 3, 2, 1, 2);
    Rng rng(12);
    const auto critic = snapshot(agent.critic_parameters());
    auto params = agent.actor_parameters();
    for (Parameter* p : params) p->zero_grad();
    Graph g;
    g.backward(actor_loss(g, agent, normal_tensor({6, 3}, rng), rng).loss);
    agent.actor_opt.step(params);
    EXPECT_TRUE(same(agent.critic_parameters(), critic));
}

TEST(TrainStep, ActionGradientBoundedByLipschitz) {
    AgentHyperparams h = small(Algorithm::sac, 1, SnPolicy::intermediate);
    h.critic = NetworkSpec{NetworkKind::mlp, 3, 16, 1, SnPolicy::intermediate, 1};
    Agent agent(h, 4, 2, 1, 2);
    Rng rng(13);
    Network& q = agent.critics.online[0];
    randomize(q, rng, 1.0);
    q.converge_spectral_states();
    const double bound = lipschitz_bound(q).ignoring_norm;
    Graph g;
    Var in = g.variable(critic_input(Tensor(Shape{64, 2}, 0.3), normal_tensor({64, 4}, rng)));
    g.backward(sum(q.forward(g, in)));
    const Tensor grad = g.grad(in);
    for (std::size_t i = 0; i < 64; ++i) {
        const double n = std::hypot(grad(i, 0), grad(i, 1));
        EXPECT_LE(n, bound * (1.0 + 1e-9));
    }
}

TEST(AgentCheckpoint, RoundTripContinuesIdentically) {
    for (Algorithm algo : {Algorithm::sac, Algorithm::ddpg}) {
        Agent agent(small(algo, 2, SnPolicy::intermediate), 3, 2, 1, 2);
        Rng rng(14);
        ReplayBuffer replay = filled_replay(40, 3, 2, rng);
        for (std::int64_t s = 0; s < 3; ++s) train_step(agent, replay, s);

        Checkpoint ckpt;
        agent.save(ckpt);
        const auto path = std::filesystem::temp_directory_path() / "smoothac_agent_roundtrip.ckpt";
        ckpt.save(path);
        Agent restored = Agent::load(Checkpoint::load(path));
        ReplayBuffer replay_copy = replay;

        EXPECT_EQ(restored.updates, agent.updates);
        const std::vector<double> obs{0.1, -0.2, 0.3};
        EXPECT_EQ(restored.act_greedy(obs), agent.act_greedy(obs));
        EXPECT_EQ(restored.explore(obs), agent.explore(obs));
        const TrainMetrics a = train_step(agent, replay, 3);
        const TrainMetrics b = train_step(restored, replay_copy, 3);
        EXPECT_EQ(a.critic_loss, b.critic_loss);
        EXPECT_EQ(a.actor_loss, b.actor_loss);
        EXPECT_EQ(a.alpha, b.alpha);
        std::filesystem::remove(path);
    }
}

TEST(AgentHyperparams, JsonRoundTripAndValidation) {
    AgentHyperparams h = small(Algorithm::ddpg, 1, SnPolicy::intermediate);
    h.target_entropy = -0.5;
    h.adam.lr = 3e-4;
    nlohmann::json j = h;
    const AgentHyperparams back = j.get<AgentHyperparams>();
    EXPECT_EQ(nlohmann::json(back), j);

    nlohmann::json bad = j;
    bad["no_such_field"] = 1;
    EXPECT_THROW(bad.get<AgentHyperparams>(), ConfigError);

    AgentHyperparams invalid = h;
    invalid.gamma = 1.5;
    invalid.num_critics = 3;
    try {
        invalid.validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("gamma"), std::string::npos);
        EXPECT_NE(msg.find("num_critics"), std::string::npos);
    }
}
