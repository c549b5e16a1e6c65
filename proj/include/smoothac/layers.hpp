#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smoothac/autodiff.hpp"
#include "smoothac/rng.hpp"
#include "smoothac/specnorm.hpp"

namespace smoothac {

class Checkpoint;

enum class NetworkKind { mlp, modern };
enum class SnPolicy { none, intermediate };

std::string to_string(NetworkKind kind);
std::string to_string(SnPolicy policy);
NetworkKind parse_network_kind(const std::string& s);
SnPolicy parse_sn_policy(const std::string& s);

inline constexpr double kLayerNormEps = 1e-5;
// Power steps run when SN is enabled, before the first forward pass.
inline constexpr int kSnWarmupSteps = 15;

// Head architecture.
//
// mlp, depth d:    in->width, relu, (d-1) x [width->width, relu], width->out
// modern, depth d: in->width, (d-1) x ModernBlock, width->out
//
// For modern networks the in/out linear pair counts as one unit of depth.
// sn_policy=intermediate normalizes every linear layer except the first and last.
struct NetworkSpec {
    NetworkKind kind = NetworkKind::mlp;
    int depth = 2;
    int width = 256;
    int ffn_width = 512;
    SnPolicy sn_policy = SnPolicy::none;
    int sn_iters = 1;

    void validate() const;  // throws ConfigError
    bool operator==(const NetworkSpec&) const = default;
};

void to_json(nlohmann::json& j, const NetworkSpec& spec);
void from_json(const nlohmann::json& j, NetworkSpec& spec);

class LinearLayer {
public:
    LinearLayer() = default;
    LinearLayer(const std::string& name, std::size_t in_dim, std::size_t out_dim);

    Parameter weight;  // [out x in]
    Parameter bias;    // [out]
    std::optional<SpectralState> sn;

    [[nodiscard]] std::size_t in_dim() const noexcept { return weight.value.cols(); }
    [[nodiscard]] std::size_t out_dim() const noexcept { return weight.value.rows(); }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

    Var forward(Graph& g, Var x, ParamMode mode = ParamMode::trainable);
    // The weight the forward pass applies: weight, or weight / (u^T weight v) under SN.
    [[nodiscard]] Tensor effective_weight() const;
    // Runs sn->iters_per_step power steps; no-op without SN.
    void power_step();

    void init_orthogonal(Rng& rng, double gain);
    void init_uniform(Rng& rng, double bound);
    // Fresh random state followed by kSnWarmupSteps power steps.
    void enable_sn(Rng& rng, int iters_per_step);

private:
    std::string name_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(const std::string& name, std::size_t width, double eps = kLayerNormEps);

    Parameter gain;
    Parameter shift;
    double eps = kLayerNormEps;

    Var forward(Graph& g, Var x, ParamMode mode = ParamMode::trainable);
};

// x + down(relu(up(norm(x)))), no dropout.
class ModernBlock {
public:
    ModernBlock() = default;
    ModernBlock(const std::string& name, std::size_t width, std::size_t hidden);

    LayerNorm norm;
    LinearLayer up;    // [hidden x width]
    LinearLayer down;  // [width x hidden]

    Var forward(Graph& g, Var x, ParamMode mode = ParamMode::trainable);
};

class Network {
public:
    Network() = default;
    Network(const NetworkSpec& spec, std::size_t in_dim, std::size_t out_dim, Rng& rng);

    Var forward(Graph& g, Var x, ParamMode mode = ParamMode::trainable);
    // Gradient-free evaluation on a [batch x in] input.
    Tensor predict(const Tensor& x);

    [[nodiscard]] const NetworkSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::size_t in_dim() const noexcept { return in_dim_; }
    [[nodiscard]] std::size_t out_dim() const noexcept { return out_dim_; }

    // Stable ordering: input, hidden/blocks, output.
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    [[nodiscard]] std::size_t parameter_count() const;

    std::vector<LinearLayer*> linear_layers();
    std::vector<const LinearLayer*> linear_layers() const;

    LinearLayer& input_layer() noexcept { return input_; }
    LinearLayer& output_layer() noexcept { return output_; }
    const LinearLayer& input_layer() const noexcept { return input_; }
    const LinearLayer& output_layer() const noexcept { return output_; }
    std::vector<LinearLayer>& hidden_layers() noexcept { return hidden_; }
    const std::vector<LinearLayer>& hidden_layers() const noexcept { return hidden_; }
    std::vector<ModernBlock>& blocks() noexcept { return blocks_; }
    const std::vector<ModernBlock>& blocks() const noexcept { return blocks_; }

    // One scheduled power-iteration update on every SN layer.
    void power_step();
    // Runs power iteration on every SN layer until sigma_hat moves less than tol.
    void converge_spectral_states(int max_steps = 2000, double tol = 1e-13);

    // Copy with SN removed whose weights are the current effective weights.
    [[nodiscard]] Network effective_copy() const;

    void save(Checkpoint& ckpt, const std::string& prefix) const;
    static Network load(const Checkpoint& ckpt, const std::string& prefix);

private:
    NetworkSpec spec_;
    std::size_t in_dim_ = 0;
    std::size_t out_dim_ = 0;
    LinearLayer input_;
    std::vector<LinearLayer> hidden_;
    std::vector<ModernBlock> blocks_;
    LinearLayer output_;
};

// Closed-form parameter count for a spec.
std::size_t expected_parameter_count(const NetworkSpec& spec, std::size_t in_dim, std::size_t out_dim);

// Actor emits [mu | log_sigma], 2 * action_dim outputs.
Network build_actor_head(const NetworkSpec& spec, std::size_t feature_dim, std::size_t action_dim, Rng& rng);
// Critic reads [action | feature] and emits one Q value.
Network build_critic_head(const NetworkSpec& spec, std::size_t feature_dim, std::size_t action_dim, Rng& rng);

}  // namespace smoothac
