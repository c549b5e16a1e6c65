#include "smoothac/specnorm.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "smoothac/layers.hpp"

namespace smoothac {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(const Tensor& t) { return {t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
ConstVecMap as_vector(const Tensor& t) { return {t.data().data(), Eigen::Index(t.size())}; }
VecMap as_vector(Tensor& t) { return {t.data().data(), Eigen::Index(t.size())}; }

void require_matrix(const Tensor& w) {
    if (w.rank() != 2 || w.size() == 0) throw DimensionError("spectral: expected non-empty matrix, got " + shape_string(w.shape()));
}

Tensor unit_gaussian(std::size_t n, Rng& rng) {
    Tensor t = normal_tensor(Shape{n}, rng);
    const double norm = as_vector(t).norm();
    if (norm > 0.0) as_vector(t) /= norm;
    else t[0] = 1.0;
    return t;
}

}  // namespace

double sigma_estimate(const Tensor& weight, const Tensor& u, const Tensor& v) {
    return as_vector(u).dot(as_matrix(weight) * as_vector(v));
}

SpectralState init_spectral_state(const Tensor& weight, Rng& rng, int iters_per_step) {
    require_matrix(weight);
    if (iters_per_step < 1) throw ConfigError("spectral: iters_per_step must be >= 1");
    SpectralState s;
    s.u = unit_gaussian(weight.rows(), rng);
    s.v = unit_gaussian(weight.cols(), rng);
    s.iters_per_step = iters_per_step;
    s.sigma_hat = std::max(sigma_estimate(weight, s.u, s.v), kSigmaFloor);
    return s;
}

SpectralState power_iteration_step(const Tensor& weight, SpectralState state) {
    require_matrix(weight);
    if (state.u.size() != weight.rows() || state.v.size() != weight.cols()) {
        throw DimensionError("spectral: state vectors do not match " + shape_string(weight.shape()));
    }
    auto w = as_matrix(weight);
    Eigen::VectorXd nv = w.transpose() * as_vector(state.u);
    const double nv_norm = nv.norm();
    if (nv_norm > 0.0) as_vector(state.v) = nv / nv_norm;
    Eigen::VectorXd nu = w * as_vector(state.v);
    const double nu_norm = nu.norm();
    if (nu_norm > 0.0) as_vector(state.u) = nu / nu_norm;
    state.sigma_hat = std::max(sigma_estimate(weight, state.u, state.v), kSigmaFloor);
    return state;
}

void power_iterate(const Tensor& weight, SpectralState& state, int steps) {
    for (int k = 0; k < steps; ++k) state = power_iteration_step(weight, std::move(state));
}

Tensor normalized_weight(const Tensor& weight, const SpectralState& state) {
    const double sigma = std::max(sigma_estimate(weight, state.u, state.v), kSigmaFloor);
    Tensor out = weight;
    as_vector(out) /= sigma;
    return out;
}

double exact_sigma_max(const Tensor& weight) {
    require_matrix(weight);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(as_matrix(weight)));
    return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------

LipschitzReport lipschitz_bound(const Network& net) {
    LipschitzReport report;
    auto add = [&report](std::string name, double factor, double conservative_factor) {
        report.factors.push_back({std::move(name), factor});
        report.ignoring_norm *= factor;
        report.conservative *= conservative_factor;
    };
    auto layer_norm_of = [](const LinearLayer& l) { return exact_sigma_max(l.effective_weight()); };

    const LinearLayer& in = net.input_layer();
    add(in.name(), layer_norm_of(in), layer_norm_of(in));
    if (net.spec().kind == NetworkKind::mlp) {
        for (const LinearLayer& l : net.hidden_layers()) {
            const double f = layer_norm_of(l);
            add(l.name(), f, f);
        }
    } else {
        for (const ModernBlock& b : net.blocks()) {
            const double branch = layer_norm_of(b.down) * layer_norm_of(b.up);
            double gain_inf = 0.0;
            for (double g : b.norm.gain.value.data()) gain_inf = std::max(gain_inf, std::abs(g));
            const double norm_bound = gain_inf / std::sqrt(b.norm.eps);
            add(b.up.name().substr(0, b.up.name().rfind('.')), 1.0 + branch, 1.0 + branch * norm_bound);
        }
    }
    const LinearLayer& out = net.output_layer();
    add(out.name(), layer_norm_of(out), layer_norm_of(out));
    return report;
}

}  // namespace smoothac
