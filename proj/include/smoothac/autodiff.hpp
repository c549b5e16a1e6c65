#pragma once

// Define-by-run reverse-mode differentiation over rank-0/1/2 tensors.
//
// Accumulation contract:
//   * Graph::backward may run once per graph; a second call throws ContractError.
//   * Parameter::grad accumulates (+=) across graphs until zero_grad() is called.

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "smoothac/tensor.hpp"

namespace smoothac {

struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value) : name(std::move(name)), value(std::move(value)) {}

    std::string name;
    Tensor value;
    Tensor grad;  // empty until first written

    [[nodiscard]] bool has_grad() const noexcept { return !grad.empty(); }
    void zero_grad() { grad = Tensor::zeros_like(value); }
};

enum class ParamMode { trainable, frozen };

class Graph;

class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    [[nodiscard]] Graph* graph() const noexcept { return graph_; }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }
    [[nodiscard]] bool valid() const noexcept { return graph_ != nullptr; }

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const;
    [[nodiscard]] bool requires_grad() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    // Input that never receives a gradient.
    Var constant(Tensor value);
    // Leaf whose gradient can be read back with grad().
    Var variable(Tensor value);
    // Leaf bound to a parameter. Frozen parameters are read but never written.
    Var param(Parameter& p, ParamMode mode = ParamMode::trainable);

    [[nodiscard]] const Tensor& value(Var v) const;
    [[nodiscard]] const Tensor& value(std::size_t id) const;
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    // Gradient of a node after backward; a zero tensor when nothing reached it.
    [[nodiscard]] Tensor grad(Var v) const;

    void backward(Var loss);
    [[nodiscard]] bool backward_done() const noexcept { return backward_done_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    // Op-author interface.
    Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
    // Gradient slot for a node, allocating zeros on first use.
    Tensor& grad_slot(std::size_t id);
    [[nodiscard]] const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_.at(id).parents; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    std::deque<Node> nodes_;  // deque keeps value() references stable
    bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops require equal shapes.

Var matmul(Var a, Var b);                 // [m x k] . [k x n]
Var linear(Var x, Var weight, Var bias);  // x . weight^T + bias, weight [out x in], bias [out]
Var linear(Var x, Var weight);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);  // [m x n] + [n]
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var neg(Var a);

Var relu(Var a);  // subgradient 0 at 0
Var tanh(Var a);
Var sech_squared(Var a);  // 1 - tanh(a)^2 without cancellation
Var square(Var a);
Var exp(Var a);
Var log(Var a);  // DomainError on non-positive input
Var clamp(Var a, double lo, double hi);
Var minimum(Var a, Var b);  // ties route the gradient to a

enum class UnaryOp { relu, tanh, square, exp, log };
enum class BinaryOp { add, sub, mul };
Var elementwise(UnaryOp op, Var a);
Var elementwise(BinaryOp op, Var a, Var b);

Var sum(Var a);
Var mean(Var a);
Var sum(Var a, std::size_t axis);
Var mean(Var a, std::size_t axis);

Var concat(Var a, Var b, std::size_t axis);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var detach(Var a);

// Row-wise (x - mean) / sqrt(var + eps) * gain + shift.
Var layer_norm(Var x, Var gain, Var shift, double eps);

// weight / (u^T weight v). u and v are constants; the gradient flows through
// both the numerator and the denominator. Denominators below `floor` are
// replaced by `floor` and treated as constants.
Var spectral_normalize(Var weight, const Tensor& u, const Tensor& v, double floor);

}  // namespace smoothac
