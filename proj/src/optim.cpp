#include "smoothac/optim.hpp"

#include <cmath>

namespace smoothac {

void Adam::step(const std::vector<Parameter*>& params) {
    if (m_.empty()) {
        for (const Parameter* p : params) {
            m_.push_back(Tensor::zeros_like(p->value));
            v_.push_back(Tensor::zeros_like(p->value));
        }
    }
    if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        if (!p.has_grad()) throw ContractError("Adam: parameter '" + p.name + "' has no gradient");
        if (!m_[k].same_shape(p.value)) throw ContractError("Adam: shape of '" + p.name + "' changed");
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double gi = p.grad[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

void Adam::restore(std::int64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != v.size()) throw ContractError("Adam::restore: moment lists differ in length");
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace smoothac
