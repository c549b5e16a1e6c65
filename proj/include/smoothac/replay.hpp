#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "smoothac/rng.hpp"
#include "smoothac/tensor.hpp"

namespace smoothac {

class Checkpoint;

// `done` marks a terminal transition (no bootstrap past it). Time-limit
// truncation is not terminal; n-step windows stop at episode changes anyway.
struct Transition {
    std::vector<double> obs;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_obs;
    bool done = false;
    std::int64_t episode = 0;
    std::int64_t step = 0;  // index within the episode

    bool operator==(const Transition&) const = default;
};

// Stacked n-step samples. reward[i] = sum_{k<m} gamma^k r_{t+k}, discount[i] = gamma^m,
// next_obs holds s_{t+m}; done[i] = 1 when the window ends on a terminal transition.
struct Batch {
    Tensor obs;       // [B x obs_dim]
    Tensor action;    // [B x act_dim]
    Tensor reward;    // [B]
    Tensor next_obs;  // [B x obs_dim]
    Tensor discount;  // [B]
    Tensor done;      // [B]
    std::vector<int> horizon;  // m per element

    [[nodiscard]] std::size_t size() const noexcept { return reward.size(); }
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity, std::uint64_t seed = 0);

    // Throws ContractError on non-finite fields or inconsistent widths.
    void push(Transition t);

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    // i = 0 is the oldest stored transition.
    [[nodiscard]] const Transition& at(std::size_t i) const;

    // Uniform indices into [0, size()).
    std::vector<std::size_t> sample_indices(std::size_t batch_size);
    Batch sample_nstep(std::size_t batch_size, int n, double gamma);
    // n-step assembly for given logical indices, no randomness.
    Batch assemble(const std::vector<std::size_t>& indices, int n, double gamma) const;

    void save(Checkpoint& ckpt, const std::string& prefix) const;
    static ReplayBuffer load(const Checkpoint& ckpt, const std::string& prefix);

private:
    [[nodiscard]] std::size_t physical(std::size_t logical) const noexcept { return (head_ + logical) % capacity_; }

    std::size_t capacity_;
    std::vector<Transition> storage_;
    std::size_t head_ = 0;  // physical index of the oldest entry
    std::size_t size_ = 0;
    Rng rng_;
};

}  // namespace smoothac
