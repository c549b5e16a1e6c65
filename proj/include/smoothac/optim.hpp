#pragma once

#include <cstdint>
#include <vector>

#include "smoothac/autodiff.hpp"

namespace smoothac {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moments are indexed by position in the parameter
// list passed to step(), so the same ordering must be used on every call.
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig config) : config_(config) {}

    void step(const std::vector<Parameter*>& params);

    [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::int64_t steps() const noexcept { return t_; }
    [[nodiscard]] const std::vector<Tensor>& first_moments() const noexcept { return m_; }
    [[nodiscard]] const std::vector<Tensor>& second_moments() const noexcept { return v_; }
    void restore(std::int64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    AdamConfig config_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace smoothac
