#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "smoothac/diagnostics.hpp"
#include "smoothac/specnorm.hpp"

using namespace smoothac;

namespace {

std::filesystem::path scratch(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(GradNorm, ComposesAcrossParameters) {
    Parameter a("a", Tensor::vector({3.0}));
    Parameter b("b", Tensor::matrix({{0.0, 0.0}}));
    a.grad = Tensor::vector({3.0});
    b.grad = Tensor::matrix({{4.0, 0.0}});
    EXPECT_DOUBLE_EQ(grad_norm(std::vector<Parameter*>{&a}), 3.0);
    EXPECT_DOUBLE_EQ(grad_norm(std::vector<Parameter*>{&a, &b}), 5.0);
    const double na = grad_norm(std::vector<Parameter*>{&a});
    const double nb = grad_norm(std::vector<Parameter*>{&b});
    EXPECT_DOUBLE_EQ(grad_norm(std::vector<Parameter*>{&b, &a}), std::hypot(na, nb));
    Parameter c("c", Tensor::vector({1.0}));
    c.grad = Tensor();
    EXPECT_THROW(grad_norm(std::vector<Parameter*>{&a, &c}), ContractError);
}

TEST(SingularValues, OrthogonalInitAndRowCount) {
    Rng rng(1);
    Network net(NetworkSpec{NetworkKind::mlp, 3, 16, 1, SnPolicy::none, 1}, 16, 4, rng);
    const auto rows = track_singular_values(net, "critic");
    ASSERT_EQ(rows.size(), net.linear_layers().size());
    for (const SingularValueRow& r : rows) {
        EXPECT_EQ(r.network, "critic");
        EXPECT_FALSE(r.sn_active);
        EXPECT_EQ(r.sigma_hat, 0.0);
        EXPECT_EQ(r.sigma_effective, r.sigma_exact);
    }
    const auto hidden = net.hidden_layers();
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        EXPECT_NEAR(rows[1 + i].sigma_exact, std::sqrt(2.0), 1e-9);
    }
}

TEST(SingularValues, ConvergedSnIsUnitEffective) {
    Rng rng(2);
    Network net(NetworkSpec{NetworkKind::modern, 3, 12, 20, SnPolicy::intermediate, 1}, 5, 1, rng);
    for (LinearLayer* l : net.linear_layers()) {
        for (double& x : l->weight.value.data()) x *= 2.5;
    }
    net.converge_spectral_states();
    int active = 0;
    for (const SingularValueRow& r : track_singular_values(net, "critic")) {
        if (!r.sn_active) continue;
        ++active;
        EXPECT_GE(r.sigma_effective, 0.999);
        EXPECT_LE(r.sigma_effective, 1.001);
        EXPECT_NEAR(r.sigma_hat, r.sigma_exact, 1e-6 * r.sigma_exact);
    }
    EXPECT_EQ(active, 4);
}

TEST(SigmaSchedule, Due) {
    EXPECT_TRUE(sigma_exact_due(0));
    EXPECT_TRUE(sigma_exact_due(2000));
    EXPECT_FALSE(sigma_exact_due(1999));
    EXPECT_TRUE(sigma_exact_due(30, 10));
    EXPECT_FALSE(sigma_exact_due(30, 0));
}

TEST(CrashHold, Examples) {
    const std::vector<EvalPoint> s{{0, 1.0}, {10, 5.0}, {20, 7.0}, {30, 2.0}};
    EXPECT_EQ(crash_hold(s, std::nullopt), s);
    const std::vector<EvalPoint> held{{0, 1.0}, {10, 5.0}, {20, 5.0}, {30, 5.0}};
    EXPECT_EQ(crash_hold(s, 15), held);
    const std::vector<EvalPoint> exact{{0, 1.0}, {10, 5.0}, {20, 7.0}, {30, 7.0}};
    EXPECT_EQ(crash_hold(s, 20), exact);
    const std::vector<EvalPoint> early{{5, 3.0}, {10, 4.0}};
    const std::vector<EvalPoint> zeros{{5, 0.0}, {10, 0.0}};
    EXPECT_EQ(crash_hold(early, 2), zeros);
}

TEST(Metrics, ColumnsAndRoundTrip) {
    const auto path = scratch("smoothac_metrics_test.csv");
    {
        MetricsWriter w(path, {"critic/hidden0"});
        MetricsRecord r;
        r.step = 1;
        r.critic_loss = 0.1 + 0.2;
        r.alpha = 1.0 / 3.0;
        r.sigma_hat = {1.25};
        w.write(r);
        r.step = 3;
        r.updated = true;
        r.episode_return = 812.5;
        w.write(r);
        EXPECT_EQ(w.rows(), 2u);
    }
    const CsvTable t = read_csv(path);
    EXPECT_EQ(t.columns, metrics_columns({"critic/hidden0"}));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(std::stod(t.rows[0][t.column("critic_loss")]), 0.1 + 0.2);
    EXPECT_EQ(std::stod(t.rows[0][t.column("alpha")]), 1.0 / 3.0);
    EXPECT_EQ(t.rows[0][t.column("episode_return")], "");
    EXPECT_EQ(t.rows[1][t.column("episode_return")], "812.5");
    EXPECT_EQ(t.rows[1][t.column("sigma_hat:critic/hidden0")], "1.25");
    EXPECT_THROW((void)t.column("missing"), std::exception);
    std::filesystem::remove(path);
}

TEST(Metrics, WriterRejectsContractViolations) {
    const auto path = scratch("smoothac_metrics_reject.csv");
    MetricsWriter w(path, {"a"});
    MetricsRecord r;
    r.step = 5;
    r.sigma_hat = {1.0};
    w.write(r);
    EXPECT_THROW(w.write(r), ContractError);
    r.step = 6;
    r.sigma_hat = {};
    EXPECT_THROW(w.write(r), ContractError);
    r.sigma_hat = {1.0};
    r.critic_loss = std::numeric_limits<double>::infinity();
    EXPECT_THROW(w.write(r), ContractError);
    r.event = "crash";
    EXPECT_NO_THROW(w.write(r));
    EXPECT_EQ(w.rows(), 2u);
    std::filesystem::remove(path);
}

TEST(Csv, WriteReadRoundTrip) {
    const auto path = scratch("smoothac_csv_roundtrip.csv");
    CsvTable t;
    t.columns = {"x", "y"};
    t.rows = {{"1", format_double(0.1)}, {"2", format_double(-1e-300)}};
    write_csv(path, t);
    const CsvTable back = read_csv(path);
    EXPECT_EQ(back.columns, t.columns);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(std::stod(back.rows[1][1]), -1e-300);
    std::filesystem::remove(path);
}

TEST(Csv, FormatDoubleIsShortestRoundTrip) {
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_EQ(format_double(0.1), "0.1");
    for (double x : {1.0 / 3.0, 0.1 + 0.2, 6.02214076e23, -2.5e-17}) EXPECT_EQ(std::stod(format_double(x)), x);
}
