#include "smoothac/replay.hpp"

#include <cmath>
#include <sstream>

#include "smoothac/checkpoint.hpp"

namespace smoothac {

namespace {

bool finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw ConfigError("replay capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
    if (!finite(t.obs) || !finite(t.action) || !finite(t.next_obs) || !std::isfinite(t.reward)) {
        throw ContractError("replay: transition has non-finite fields");
    }
    if (t.obs.size() != t.next_obs.size()) throw ContractError("replay: obs and next_obs widths differ");
    if (size_ > 0) {
        const Transition& first = storage_[head_];
        if (first.obs.size() != t.obs.size() || first.action.size() != t.action.size()) {
            throw ContractError("replay: transition widths differ from stored ones");
        }
    }
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
        ++size_;
    } else {
        // Full: overwrite the oldest entry and advance the head.
        storage_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw ContractError("replay: index out of range");
    return storage_[physical(i)];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size) {
    if (batch_size == 0 || size_ < batch_size) {
        throw ContractError("replay: cannot sample " + std::to_string(batch_size) + " from " + std::to_string(size_));
    }
    std::uniform_int_distribution<std::size_t> dist(0, size_ - 1);
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = dist(rng_);
    return idx;
}

Batch ReplayBuffer::sample_nstep(std::size_t batch_size, int n, double gamma) {
    if (n < 1) throw ContractError("replay: n must be >= 1");
    return assemble(sample_indices(batch_size), n, gamma);
}

Batch ReplayBuffer::assemble(const std::vector<std::size_t>& indices, int n, double gamma) const {
    if (n < 1) throw ContractError("replay: n must be >= 1");
    if (indices.empty()) throw ContractError("replay: empty batch");
    const std::size_t b = indices.size();
    const std::size_t od = at(indices[0]).obs.size();
    const std::size_t ad = at(indices[0]).action.size();
    Batch batch{Tensor(Shape{b, od}), Tensor(Shape{b, ad}), Tensor(Shape{b}), Tensor(Shape{b, od}),
                Tensor(Shape{b}),     Tensor(Shape{b}),     std::vector<int>(b)};
    for (std::size_t r = 0; r < b; ++r) {
        const std::size_t start = indices[r];
        const Transition& first = at(start);
        double ret = 0.0, disc = 1.0;
        const Transition* last = &first;
        int m = 0;
        for (std::size_t k = 0; k < std::size_t(n); ++k) {
            const std::size_t idx = start + k;
            if (idx >= size_) break;
            const Transition& t = at(idx);
            // Contiguous in one episode only.
            if (k > 0 && (t.episode != last->episode || t.step != last->step + 1)) break;
            if (k > 0 && last->done) break;
            ret += disc * t.reward;
            disc *= gamma;
            last = &t;
            ++m;
            if (t.done) break;
        }
        for (std::size_t c = 0; c < od; ++c) {
            batch.obs(r, c) = first.obs[c];
            batch.next_obs(r, c) = last->next_obs[c];
        }
        for (std::size_t c = 0; c < ad; ++c) batch.action(r, c) = first.action[c];
        batch.reward[r] = ret;
        batch.discount[r] = disc;
        batch.done[r] = last->done ? 1.0 : 0.0;
        batch.horizon[r] = m;
    }
    return batch;
}

void ReplayBuffer::save(Checkpoint& ckpt, const std::string& prefix) const {
    nlohmann::json j;
    j["capacity"] = capacity_;
    j["size"] = size_;
    std::ostringstream rng_state;
    rng_state << rng_;
    j["rng"] = rng_state.str();
    ckpt.meta["replay"][prefix] = j;
    if (size_ == 0) return;
    const std::size_t od = at(0).obs.size(), ad = at(0).action.size();
    Tensor obs(Shape{size_, od}), act(Shape{size_, ad}), next(Shape{size_, od}), scal(Shape{size_, 4});
    for (std::size_t i = 0; i < size_; ++i) {
        const Transition& t = at(i);
        for (std::size_t c = 0; c < od; ++c) {
            obs(i, c) = t.obs[c];
            next(i, c) = t.next_obs[c];
        }
        for (std::size_t c = 0; c < ad; ++c) act(i, c) = t.action[c];
        scal(i, 0) = t.reward;
        scal(i, 1) = t.done ? 1.0 : 0.0;
        scal(i, 2) = double(t.episode);
        scal(i, 3) = double(t.step);
    }
    ckpt.put(prefix + "/obs", std::move(obs));
    ckpt.put(prefix + "/action", std::move(act));
    ckpt.put(prefix + "/next_obs", std::move(next));
    ckpt.put(prefix + "/scalars", std::move(scal));
}

ReplayBuffer ReplayBuffer::load(const Checkpoint& ckpt, const std::string& prefix) {
    const auto& j = ckpt.meta.at("replay").at(prefix);
    ReplayBuffer buf(j.at("capacity").get<std::size_t>());
    std::istringstream rng_state(j.at("rng").get<std::string>());
    rng_state >> buf.rng_;
    const auto size = j.at("size").get<std::size_t>();
    if (size == 0) return buf;
    const Tensor& obs = ckpt.get(prefix + "/obs");
    const Tensor& act = ckpt.get(prefix + "/action");
    const Tensor& next = ckpt.get(prefix + "/next_obs");
    const Tensor& scal = ckpt.get(prefix + "/scalars");
    for (std::size_t i = 0; i < size; ++i) {
        Transition t;
        t.obs.assign(obs.data().begin() + std::ptrdiff_t(i * obs.cols()), obs.data().begin() + std::ptrdiff_t((i + 1) * obs.cols()));
        t.next_obs.assign(next.data().begin() + std::ptrdiff_t(i * next.cols()),
                          next.data().begin() + std::ptrdiff_t((i + 1) * next.cols()));
        t.action.assign(act.data().begin() + std::ptrdiff_t(i * act.cols()), act.data().begin() + std::ptrdiff_t((i + 1) * act.cols()));
        t.reward = scal(i, 0);
        t.done = scal(i, 1) != 0.0;
        t.episode = std::int64_t(scal(i, 2));
        t.step = std::int64_t(scal(i, 3));
        buf.push(std::move(t));
    }
    return buf;
}

}  // namespace smoothac
