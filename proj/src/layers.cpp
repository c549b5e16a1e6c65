#include "smoothac/layers.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>
#include <cmath>

#include "smoothac/checkpoint.hpp"

namespace smoothac {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

std::string to_string(NetworkKind kind) { return kind == NetworkKind::mlp ? "mlp" : "modern"; }
std::string to_string(SnPolicy policy) { return policy == SnPolicy::none ? "none" : "intermediate"; }

NetworkKind parse_network_kind(const std::string& s) {
    if (s == "mlp") return NetworkKind::mlp;
    if (s == "modern") return NetworkKind::modern;
    throw ConfigError("unknown network kind '" + s + "' (expected mlp|modern)");
}

SnPolicy parse_sn_policy(const std::string& s) {
    if (s == "none" || s == "off") return SnPolicy::none;
    if (s == "intermediate" || s == "on") return SnPolicy::intermediate;
    throw ConfigError("unknown sn policy '" + s + "' (expected none|intermediate)");
}

void NetworkSpec::validate() const {
    if (depth < 1) throw ConfigError("network depth must be >= 1, got " + std::to_string(depth));
    if (width < 1) throw ConfigError("network width must be >= 1, got " + std::to_string(width));
    if (kind == NetworkKind::modern && ffn_width < 1) throw ConfigError("ffn_width must be >= 1");
    if (sn_iters < 1) throw ConfigError("sn_iters must be >= 1");
}

void to_json(nlohmann::json& j, const NetworkSpec& spec) {
    j = nlohmann::json{{"kind", to_string(spec.kind)},
                       {"depth", spec.depth},
                       {"width", spec.width},
                       {"ffn_width", spec.ffn_width},
                       {"sn_policy", to_string(spec.sn_policy)},
                       {"sn_iters", spec.sn_iters}};
}

void from_json(const nlohmann::json& j, NetworkSpec& spec) {
    NetworkSpec out;
    if (j.contains("kind")) out.kind = parse_network_kind(j.at("kind").get<std::string>());
    if (j.contains("depth")) out.depth = j.at("depth").get<int>();
    if (j.contains("width")) out.width = j.at("width").get<int>();
    if (j.contains("ffn_width")) out.ffn_width = j.at("ffn_width").get<int>();
    if (j.contains("sn_policy")) out.sn_policy = parse_sn_policy(j.at("sn_policy").get<std::string>());
    if (j.contains("sn_iters")) out.sn_iters = j.at("sn_iters").get<int>();
    for (const auto& [key, _] : j.items()) {
        if (key != "kind" && key != "depth" && key != "width" && key != "ffn_width" && key != "sn_policy" &&
            key != "sn_iters") {
            throw ConfigError("unknown network field '" + key + "'");
        }
    }
    spec = out;
}

// ---------------------------------------------------------------------------

LinearLayer::LinearLayer(const std::string& name, std::size_t in_dim, std::size_t out_dim)
    : weight(name + ".weight", Tensor(Shape{out_dim, in_dim})), bias(name + ".bias", Tensor(Shape{out_dim})), name_(name) {
    if (in_dim == 0 || out_dim == 0) throw ConfigError("linear layer '" + name + "' has a zero dimension");
}

Var LinearLayer::forward(Graph& g, Var x, ParamMode mode) {
    Var w = g.param(weight, mode);
    if (sn) w = spectral_normalize(w, sn->u, sn->v, kSigmaFloor);
    return linear(x, w, g.param(bias, mode));
}

Tensor LinearLayer::effective_weight() const { return sn ? normalized_weight(weight.value, *sn) : weight.value; }

void LinearLayer::power_step() {
    if (sn) power_iterate(weight.value, *sn, sn->iters_per_step);
}

void LinearLayer::init_orthogonal(Rng& rng, double gain) {
    const std::size_t rows = out_dim(), cols = in_dim();
    const bool tall = rows >= cols;
    const Eigen::Index n = Eigen::Index(tall ? rows : cols), k = Eigen::Index(tall ? cols : rows);
    Eigen::MatrixXd a(n, k);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < n; ++i) a(i, j) = dist(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < k; ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    Eigen::Map<RowMat> w(weight.value.data().data(), Eigen::Index(rows), Eigen::Index(cols));
    if (tall) w = gain * q;
    else w = gain * q.transpose();
    bias.value.fill(0.0);
}

void LinearLayer::init_uniform(Rng& rng, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : weight.value.data()) x = dist(rng);
    bias.value.fill(0.0);
}

void LinearLayer::enable_sn(Rng& rng, int iters_per_step) {
    sn = init_spectral_state(weight.value, rng, iters_per_step);
    power_iterate(weight.value, *sn, kSnWarmupSteps);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t width, double eps_)
    : gain(name + ".gain", Tensor(Shape{width}, 1.0)), shift(name + ".shift", Tensor(Shape{width}, 0.0)), eps(eps_) {}

Var LayerNorm::forward(Graph& g, Var x, ParamMode mode) {
    return layer_norm(x, g.param(gain, mode), g.param(shift, mode), eps);
}

ModernBlock::ModernBlock(const std::string& name, std::size_t width, std::size_t hidden)
    : norm(name + ".norm", width), up(name + ".up", width, hidden), down(name + ".down", hidden, width) {}

Var ModernBlock::forward(Graph& g, Var x, ParamMode mode) {
    if (x.value().cols() != up.in_dim()) {
        throw DimensionError("modern block: input width " + std::to_string(x.value().cols()) + " != block width " +
                             std::to_string(up.in_dim()));
    }
    Var h = relu(up.forward(g, norm.forward(g, x, mode), mode));
    return add(x, down.forward(g, h, mode));
}

// ---------------------------------------------------------------------------

Network::Network(const NetworkSpec& spec, std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : spec_(spec), in_dim_(in_dim), out_dim_(out_dim) {
    spec.validate();
    if (in_dim == 0 || out_dim == 0) throw ConfigError("network input and output dims must be >= 1");
    const auto width = std::size_t(spec.width);
    const double hidden_gain = std::sqrt(2.0);
    const bool sn = spec.sn_policy == SnPolicy::intermediate;

    input_ = LinearLayer("input", in_dim, width);
    input_.init_orthogonal(rng, hidden_gain);
    if (spec.kind == NetworkKind::mlp) {
        for (int i = 0; i + 1 < spec.depth; ++i) {
            LinearLayer& l = hidden_.emplace_back("hidden." + std::to_string(i), width, width);
            l.init_orthogonal(rng, hidden_gain);
            if (sn) l.enable_sn(rng, spec.sn_iters);
        }
    } else {
        const auto ffn = std::size_t(spec.ffn_width);
        for (int i = 0; i + 1 < spec.depth; ++i) {
            ModernBlock& b = blocks_.emplace_back("block." + std::to_string(i), width, ffn);
            b.up.init_orthogonal(rng, hidden_gain);
            b.down.init_orthogonal(rng, hidden_gain);
            if (sn) {
                b.up.enable_sn(rng, spec.sn_iters);
                b.down.enable_sn(rng, spec.sn_iters);
            }
        }
    }
    output_ = LinearLayer("output", width, out_dim);
    output_.init_uniform(rng, 1e-3);
}

Var Network::forward(Graph& g, Var x, ParamMode mode) {
    if (x.value().rank() != 2 || x.value().cols() != in_dim_) {
        throw DimensionError("network: expected [batch x " + std::to_string(in_dim_) + "] input, got " +
                             shape_string(x.value().shape()));
    }
    Var h = input_.forward(g, x, mode);
    if (spec_.kind == NetworkKind::mlp) {
        h = relu(h);
        for (LinearLayer& l : hidden_) h = relu(l.forward(g, h, mode));
    } else {
        for (ModernBlock& b : blocks_) h = b.forward(g, h, mode);
    }
    return output_.forward(g, h, mode);
}

Tensor Network::predict(const Tensor& x) {
    Graph g;
    return forward(g, g.constant(x), ParamMode::frozen).value();
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    auto add_linear = [&out](LinearLayer& l) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    };
    add_linear(input_);
    for (LinearLayer& l : hidden_) add_linear(l);
    for (ModernBlock& b : blocks_) {
        out.push_back(&b.norm.gain);
        out.push_back(&b.norm.shift);
        add_linear(b.up);
        add_linear(b.down);
    }
    add_linear(output_);
    return out;
}

std::vector<const Parameter*> Network::parameters() const {
    auto params = const_cast<Network*>(this)->parameters();
    return {params.begin(), params.end()};
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const Parameter* p : parameters()) n += p->value.size();
    return n;
}

std::vector<LinearLayer*> Network::linear_layers() {
    std::vector<LinearLayer*> out{&input_};
    for (LinearLayer& l : hidden_) out.push_back(&l);
    for (ModernBlock& b : blocks_) {
        out.push_back(&b.up);
        out.push_back(&b.down);
    }
    out.push_back(&output_);
    return out;
}

std::vector<const LinearLayer*> Network::linear_layers() const {
    auto layers = const_cast<Network*>(this)->linear_layers();
    return {layers.begin(), layers.end()};
}

void Network::power_step() {
    for (LinearLayer* l : linear_layers()) l->power_step();
}

void Network::converge_spectral_states(int max_steps, double tol) {
    for (LinearLayer* l : linear_layers()) {
        if (!l->sn) continue;
        for (int k = 0; k < max_steps; ++k) {
            const double before = l->sn->sigma_hat;
            *l->sn = power_iteration_step(l->weight.value, std::move(*l->sn));
            if (std::abs(l->sn->sigma_hat - before) <= tol * std::max(1.0, l->sn->sigma_hat)) break;
        }
    }
}

Network Network::effective_copy() const {
    Network copy = *this;
    copy.spec_.sn_policy = SnPolicy::none;
    for (LinearLayer* l : copy.linear_layers()) {
        if (l->sn) {
            l->weight.value = l->effective_weight();
            l->sn.reset();
        }
        l->weight.grad = Tensor();
        l->bias.grad = Tensor();
    }
    for (Parameter* p : copy.parameters()) p->grad = Tensor();
    return copy;
}

void Network::save(Checkpoint& ckpt, const std::string& prefix) const {
    nlohmann::json j;
    j["spec"] = spec_;
    j["in_dim"] = in_dim_;
    j["out_dim"] = out_dim_;
    ckpt.meta["networks"][prefix] = j;
    for (const Parameter* p : parameters()) ckpt.put(prefix + "/" + p->name, p->value);
    for (const LinearLayer* l : linear_layers()) {
        if (!l->sn) continue;
        const std::string base = prefix + "/" + l->name() + ".sn.";
        ckpt.put(base + "u", l->sn->u);
        ckpt.put(base + "v", l->sn->v);
        ckpt.put(base + "sigma_hat", Tensor::scalar(l->sn->sigma_hat));
    }
}

Network Network::load(const Checkpoint& ckpt, const std::string& prefix) {
    const auto& j = ckpt.meta.at("networks").at(prefix);
    Rng rng(0);
    Network net(j.at("spec").get<NetworkSpec>(), j.at("in_dim").get<std::size_t>(), j.at("out_dim").get<std::size_t>(), rng);
    for (Parameter* p : net.parameters()) {
        const Tensor& t = ckpt.get(prefix + "/" + p->name);
        if (!t.same_shape(p->value)) throw std::runtime_error("checkpoint: shape mismatch for " + prefix + "/" + p->name);
        p->value = t;
    }
    for (LinearLayer* l : net.linear_layers()) {
        if (!l->sn) continue;
        const std::string base = prefix + "/" + l->name() + ".sn.";
        l->sn->u = ckpt.get(base + "u");
        l->sn->v = ckpt.get(base + "v");
        l->sn->sigma_hat = ckpt.get(base + "sigma_hat").item();
    }
    return net;
}

std::size_t expected_parameter_count(const NetworkSpec& spec, std::size_t in_dim, std::size_t out_dim) {
    const auto w = std::size_t(spec.width);
    const auto d = std::size_t(spec.depth);
    std::size_t total = in_dim * w + w + w * out_dim + out_dim;
    if (spec.kind == NetworkKind::mlp) {
        total += (d - 1) * (w * w + w);
    } else {
        const auto f = std::size_t(spec.ffn_width);
        total += (d - 1) * (2 * w + (w * f + f) + (f * w + w));
    }
    return total;
}

Network build_actor_head(const NetworkSpec& spec, std::size_t feature_dim, std::size_t action_dim, Rng& rng) {
    if (feature_dim == 0 || action_dim == 0) throw ConfigError("actor head: dims must be >= 1");
    return Network(spec, feature_dim, 2 * action_dim, rng);
}

Network build_critic_head(const NetworkSpec& spec, std::size_t feature_dim, std::size_t action_dim, Rng& rng) {
    if (feature_dim == 0 || action_dim == 0) throw ConfigError("critic head: dims must be >= 1");
    return Network(spec, action_dim + feature_dim, 1, rng);
}

}  // namespace smoothac
