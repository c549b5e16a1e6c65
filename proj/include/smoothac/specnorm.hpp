#pragma once

#include <string>
#include <vector>

#include "smoothac/rng.hpp"
#include "smoothac/tensor.hpp"

namespace smoothac {

class Network;

inline constexpr double kSigmaFloor = 1e-12;

// Power-iteration estimate of a weight's top singular pair.
struct SpectralState {
    Tensor u;  // unit vector, length = rows of W
    Tensor v;  // unit vector, length = cols of W
    double sigma_hat = 1.0;
    int iters_per_step = 1;
};

// u, v drawn from a unit Gaussian and normalized; sigma_hat = u^T W v.
SpectralState init_spectral_state(const Tensor& weight, Rng& rng, int iters_per_step = 1);

// One power-method step: v <- W^T u / |W^T u|, u <- W v / |W v|, sigma_hat = u^T W v.
// A vector whose update vanishes is left unchanged; sigma_hat is floored at kSigmaFloor.
SpectralState power_iteration_step(const Tensor& weight, SpectralState state);
// Runs `steps` power steps in place.
void power_iterate(const Tensor& weight, SpectralState& state, int steps);

double sigma_estimate(const Tensor& weight, const Tensor& u, const Tensor& v);
// weight / max(u^T W v, kSigmaFloor)
Tensor normalized_weight(const Tensor& weight, const SpectralState& state);

// Largest singular value from a full SVD.
double exact_sigma_max(const Tensor& weight);

struct LipschitzFactor {
    std::string layer;
    double factor = 1.0;
};

// Upper bounds on the Lipschitz constant of a network's input-output map.
// `ignoring_norm` treats each LayerNorm as 1-Lipschitz; `conservative` charges
// every LayerNorm |gain|_inf / sqrt(eps). The two coincide for MLP networks.
struct LipschitzReport {
    double ignoring_norm = 1.0;
    double conservative = 1.0;
    std::vector<LipschitzFactor> factors;  // per stage, LayerNorm taken as 1
};

LipschitzReport lipschitz_bound(const Network& network);

}  // namespace smoothac
