#include "smoothac/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace smoothac {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

ConstMatMap as_matrix(const Tensor& t) { return {t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
MatMap as_matrix(Tensor& t) { return {t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
ConstVecMap as_vector(const Tensor& t) { return {t.data().data(), Eigen::Index(t.size())}; }
VecMap as_vector(Tensor& t) { return {t.data().data(), Eigen::Index(t.size())}; }

Graph& graph_of(Var a) {
    if (!a.valid()) throw ContractError("operation on an unbound Var");
    return *a.graph();
}

Graph& graph_of(Var a, Var b) {
    Graph& g = graph_of(a);
    if (b.graph() != &g) throw ContractError("operands belong to different graphs");
    return g;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 operand, got " + shape_string(t.shape()));
}

// Adds `delta` into the gradient slot of node `id` when it requires a gradient.
void accumulate(Graph& g, std::size_t id, const Tensor& delta) {
    if (!g.requires_grad(id)) return;
    as_vector(g.grad_slot(id)) += as_vector(delta);
}

template <class Fwd, class Dfdx>
Var unary(Var a, Fwd fwd, Dfdx dfdx) {
    Graph& g = graph_of(a);
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    const std::size_t ia = a.id();
    return g.record(std::move(y), {ia}, [ia, dfdx](Graph& gr, const Tensor& gy) {
        const Tensor& xin = gr.value(ia);
        Tensor& gx = gr.grad_slot(ia);
        for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += gy[i] * dfdx(xin[i]);
    });
}

}  // namespace

// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return graph_->value(id_); }
const Shape& Var::shape() const { return value().shape(); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p, ParamMode mode) {
    Node n;
    n.param = &p;
    n.requires_grad = mode == ParamMode::trainable;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return value(v.id()); }

const Tensor& Graph::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->value : n.value;
}

Tensor Graph::grad(Var v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.empty()) return Tensor::zeros_like(value(v.id()));
    return n.grad;
}

Tensor& Graph::grad_slot(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.param ? n.param->value : n.value);
    return n.grad;
}

Var Graph::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_.at(p).requires_grad;
    n.parents = std::move(parents);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
    if (loss.graph() != this) throw ContractError("backward: loss belongs to another graph");
    if (backward_done_) throw ContractError("backward: graph already consumed");
    const Tensor& lv = value(loss.id());
    if (lv.size() != 1) throw ContractError("backward: loss must be scalar, got " + shape_string(lv.shape()));
    backward_done_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    grad_slot(loss.id()).fill(1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.param) {
            if (!n.param->has_grad()) n.param->zero_grad();
            as_vector(n.param->grad) += as_vector(n.grad);
        } else if (n.backward) {
            n.backward(*this, n.grad);
        }
    }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2("matmul", av);
    require_rank2("matmul", bv);
    if (av.cols() != bv.rows()) {
        throw DimensionError("matmul: inner dimensions differ " + shape_string(av.shape()) + " . " +
                             shape_string(bv.shape()));
    }
    Tensor out(Shape{av.rows(), bv.cols()});
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, const Tensor& gy) {
        if (gr.requires_grad(ia)) as_matrix(gr.grad_slot(ia)).noalias() += as_matrix(gy) * as_matrix(gr.value(ib)).transpose();
        if (gr.requires_grad(ib)) as_matrix(gr.grad_slot(ib)).noalias() += as_matrix(gr.value(ia)).transpose() * as_matrix(gy);
    });
}

namespace {

Var linear_impl(Var x, Var weight, const Var* bias) {
    Graph& g = graph_of(x, weight);
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require_rank2("linear", xv);
    require_rank2("linear", wv);
    if (xv.cols() != wv.cols()) {
        throw DimensionError("linear: input width " + std::to_string(xv.cols()) + " does not match weight " +
                             shape_string(wv.shape()));
    }
    Tensor out(Shape{xv.rows(), wv.rows()});
    auto om = as_matrix(out);
    om.noalias() = as_matrix(xv) * as_matrix(wv).transpose();
    std::vector<std::size_t> parents{x.id(), weight.id()};
    if (bias) {
        if (bias->graph() != &g) throw ContractError("operands belong to different graphs");
        const Tensor& bv = bias->value();
        if (bv.rank() != 1 || bv.size() != wv.rows()) {
            throw DimensionError("linear: bias shape " + shape_string(bv.shape()) + " does not match weight " +
                                 shape_string(wv.shape()));
        }
        om.rowwise() += as_vector(bv).transpose();
        parents.push_back(bias->id());
    }
    const std::size_t ix = x.id(), iw = weight.id();
    const std::size_t ib = bias ? bias->id() : 0;
    const bool has_bias = bias != nullptr;
    return g.record(std::move(out), std::move(parents), [ix, iw, ib, has_bias](Graph& gr, const Tensor& gy) {
        auto gm = as_matrix(gy);
        if (gr.requires_grad(ix)) as_matrix(gr.grad_slot(ix)).noalias() += gm * as_matrix(gr.value(iw));
        if (gr.requires_grad(iw)) as_matrix(gr.grad_slot(iw)).noalias() += gm.transpose() * as_matrix(gr.value(ix));
        if (has_bias && gr.requires_grad(ib)) as_vector(gr.grad_slot(ib)) += gm.colwise().sum().transpose();
    });
}

}  // namespace

Var linear(Var x, Var weight, Var bias) { return linear_impl(x, weight, &bias); }
Var linear(Var x, Var weight) { return linear_impl(x, weight, nullptr); }

Var add(Var a, Var b) {
    Graph& g = graph_of(a, b);
    require_same_shape("add", a.value(), b.value());
    Tensor out = a.value();
    as_vector(out) += as_vector(b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, const Tensor& gy) {
        accumulate(gr, ia, gy);
        accumulate(gr, ib, gy);
    });
}

Var sub(Var a, Var b) {
    Graph& g = graph_of(a, b);
    require_same_shape("sub", a.value(), b.value());
    Tensor out = a.value();
    as_vector(out) -= as_vector(b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, const Tensor& gy) {
        accumulate(gr, ia, gy);
        if (gr.requires_grad(ib)) as_vector(gr.grad_slot(ib)) -= as_vector(gy);
    });
}

Var mul(Var a, Var b) {
    Graph& g = graph_of(a, b);
    require_same_shape("mul", a.value(), b.value());
    Tensor out = a.value();
    as_vector(out).array() *= as_vector(b.value()).array();
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, const Tensor& gy) {
        if (gr.requires_grad(ia)) as_vector(gr.grad_slot(ia)).array() += as_vector(gy).array() * as_vector(gr.value(ib)).array();
        if (gr.requires_grad(ib)) as_vector(gr.grad_slot(ib)).array() += as_vector(gy).array() * as_vector(gr.value(ia)).array();
    });
}

Var add_row(Var a, Var row) {
    Graph& g = graph_of(a, row);
    const Tensor& av = a.value();
    const Tensor& rv = row.value();
    require_rank2("add_row", av);
    if (rv.rank() != 1 || rv.size() != av.cols()) {
        throw DimensionError("add_row: row " + shape_string(rv.shape()) + " does not match " + shape_string(av.shape()));
    }
    Tensor out = av;
    as_matrix(out).rowwise() += as_vector(rv).transpose();
    const std::size_t ia = a.id(), ir = row.id();
    return g.record(std::move(out), {ia, ir}, [ia, ir](Graph& gr, const Tensor& gy) {
        accumulate(gr, ia, gy);
        if (gr.requires_grad(ir)) as_vector(gr.grad_slot(ir)) += as_matrix(gy).colwise().sum().transpose();
    });
}

Var scale(Var a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Var add_scalar(Var a, double offset) {
    return unary(a, [offset](double x) { return x + offset; }, [](double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
    Graph& g = graph_of(a);
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    const std::size_t ia = a.id();
    const std::size_t iy = g.size();
    return g.record(std::move(y), {ia}, [ia, iy](Graph& gr, const Tensor& gy) {
        const Tensor& yv = gr.value(iy);
        Tensor& gx = gr.grad_slot(ia);
        for (std::size_t i = 0; i < yv.size(); ++i) gx[i] += gy[i] * (1.0 - yv[i] * yv[i]);
    });
}

Var sech_squared(Var a) {
    auto value = [](double x) {
        const double e = std::exp(-2.0 * std::abs(x));
        return 4.0 * e / ((1.0 + e) * (1.0 + e));
    };
    return unary(a, value, [value](double x) { return -2.0 * std::tanh(x) * value(x); });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
    for (double x : a.value().data()) {
        if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
    }
    return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    return unary(
        a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var minimum(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("minimum", av, bv);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = bv[i] < av[i] ? bv[i] : av[i];
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, const Tensor& gy) {
        const Tensor& x = gr.value(ia);
        const Tensor& y = gr.value(ib);
        const bool ga = gr.requires_grad(ia), gb = gr.requires_grad(ib);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (y[i] < x[i]) {
                if (gb) gr.grad_slot(ib)[i] += gy[i];
            } else if (ga) {
                gr.grad_slot(ia)[i] += gy[i];
            }
        }
    });
}

Var elementwise(UnaryOp op, Var a) {
    switch (op) {
        case UnaryOp::relu: return relu(a);
        case UnaryOp::tanh: return tanh(a);
        case UnaryOp::square: return square(a);
        case UnaryOp::exp: return exp(a);
        case UnaryOp::log: return log(a);
    }
    throw ContractError("elementwise: unknown unary op");
}

Var elementwise(BinaryOp op, Var a, Var b) {
    switch (op) {
        case BinaryOp::add: return add(a, b);
        case BinaryOp::sub: return sub(a, b);
        case BinaryOp::mul: return mul(a, b);
    }
    throw ContractError("elementwise: unknown binary op");
}

// ---------------------------------------------------------------------------

Var sum(Var a) {
    Graph& g = graph_of(a);
    const double total = as_vector(a.value()).sum();
    const std::size_t ia = a.id();
    return g.record(Tensor::scalar(total), {ia}, [ia](Graph& gr, const Tensor& gy) {
        as_vector(gr.grad_slot(ia)).array() += gy[0];
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ContractError("mean of empty tensor");
    return scale(sum(a), 1.0 / double(n));
}

namespace {

Var reduce_axis(Var a, std::size_t axis, bool average) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    if (axis >= av.rank()) {
        throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " + shape_string(av.shape()));
    }
    if (av.rank() == 1) return average ? mean(a) : sum(a);
    const std::size_t rows = av.rows(), cols = av.cols();
    const std::size_t count = axis == 0 ? rows : cols;
    if (count == 0) throw ContractError("reduce over empty axis");
    const double factor = average ? 1.0 / double(count) : 1.0;
    Tensor out;
    if (axis == 0) {
        out = Tensor(Shape{cols});
        as_vector(out) = as_matrix(av).colwise().sum().transpose() * factor;
    } else {
        out = Tensor(Shape{rows});
        as_vector(out) = as_matrix(av).rowwise().sum() * factor;
    }
    const std::size_t ia = a.id();
    return g.record(std::move(out), {ia}, [ia, axis, factor](Graph& gr, const Tensor& gy) {
        auto gx = as_matrix(gr.grad_slot(ia));
        if (axis == 0) {
            gx.rowwise() += as_vector(gy).transpose() * factor;
        } else {
            gx.colwise() += as_vector(gy) * factor;
        }
    });
}

}  // namespace

Var sum(Var a, std::size_t axis) { return reduce_axis(a, axis, false); }
Var mean(Var a, std::size_t axis) { return reduce_axis(a, axis, true); }

Var concat(Var a, Var b, std::size_t axis) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != bv.rank() || av.rank() == 0 || axis >= av.rank()) {
        throw DimensionError("concat: incompatible shapes " + shape_string(av.shape()) + " and " +
                             shape_string(bv.shape()) + " along axis " + std::to_string(axis));
    }
    const std::size_t ia = a.id(), ib = b.id();
    if (av.rank() == 1) {
        std::vector<double> data(av.data().begin(), av.data().end());
        data.insert(data.end(), bv.data().begin(), bv.data().end());
        const std::size_t na = av.size();
        return g.record(Tensor::vector(std::move(data)), {ia, ib}, [ia, ib, na](Graph& gr, const Tensor& gy) {
            if (gr.requires_grad(ia)) { auto& ga = gr.grad_slot(ia); for (std::size_t i = 0; i < na; ++i) ga[i] += gy[i]; }
            if (gr.requires_grad(ib)) { auto& gb = gr.grad_slot(ib); for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[na + i]; }
        });
    }
    if (axis == 0) {
        if (av.cols() != bv.cols()) throw DimensionError("concat: column counts differ");
        Tensor out(Shape{av.rows() + bv.rows(), av.cols()});
        auto om = as_matrix(out);
        om.topRows(Eigen::Index(av.rows())) = as_matrix(av);
        om.bottomRows(Eigen::Index(bv.rows())) = as_matrix(bv);
        const Eigen::Index ra = Eigen::Index(av.rows()), rb = Eigen::Index(bv.rows());
        return g.record(std::move(out), {ia, ib}, [ia, ib, ra, rb](Graph& gr, const Tensor& gy) {
            if (gr.requires_grad(ia)) as_matrix(gr.grad_slot(ia)) += as_matrix(gy).topRows(ra);
            if (gr.requires_grad(ib)) as_matrix(gr.grad_slot(ib)) += as_matrix(gy).bottomRows(rb);
        });
    }
    if (av.rows() != bv.rows()) throw DimensionError("concat: row counts differ");
    Tensor out(Shape{av.rows(), av.cols() + bv.cols()});
    auto om = as_matrix(out);
    const Eigen::Index ca = Eigen::Index(av.cols()), cb = Eigen::Index(bv.cols());
    om.leftCols(ca) = as_matrix(av);
    om.rightCols(cb) = as_matrix(bv);
    return g.record(std::move(out), {ia, ib}, [ia, ib, ca, cb](Graph& gr, const Tensor& gy) {
        if (gr.requires_grad(ia)) as_matrix(gr.grad_slot(ia)) += as_matrix(gy).leftCols(ca);
        if (gr.requires_grad(ib)) as_matrix(gr.grad_slot(ib)) += as_matrix(gy).rightCols(cb);
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    require_rank2("slice_cols", av);
    if (begin > end || end > av.cols()) throw DimensionError("slice_cols: range out of bounds");
    const Eigen::Index b0 = Eigen::Index(begin), w = Eigen::Index(end - begin);
    Tensor out(Shape{av.rows(), end - begin});
    as_matrix(out) = as_matrix(av).middleCols(b0, w);
    const std::size_t ia = a.id();
    return g.record(std::move(out), {ia}, [ia, b0, w](Graph& gr, const Tensor& gy) {
        as_matrix(gr.grad_slot(ia)).middleCols(b0, w) += as_matrix(gy);
    });
}

Var detach(Var a) { return graph_of(a).constant(a.value()); }

// ---------------------------------------------------------------------------

Var layer_norm(Var x, Var gain, Var shift, double eps) {
    Graph& g = graph_of(x, gain);
    if (shift.graph() != &g) throw ContractError("operands belong to different graphs");
    const Tensor& xv = x.value();
    require_rank2("layer_norm", xv);
    const std::size_t rows = xv.rows(), d = xv.cols();
    if (d == 0) throw DimensionError("layer_norm: zero width");
    if (gain.value().rank() != 1 || gain.value().size() != d || shift.value().shape() != gain.value().shape()) {
        throw DimensionError("layer_norm: affine parameters do not match width " + std::to_string(d));
    }
    // Normalized activations and reciprocal std are kept for the backward pass.
    Tensor xhat(xv.shape());
    std::vector<double> rstd(rows);
    Tensor out(xv.shape());
    const Tensor& gv = gain.value();
    const Tensor& sv = shift.value();
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += xv(r, c);
        mu /= double(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dc = xv(r, c) - mu;
            var += dc * dc;
        }
        var /= double(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat(r, c) = (xv(r, c) - mu) * rstd[r];
            out(r, c) = xhat(r, c) * gv[c] + sv[c];
        }
    }
    const std::size_t ix = x.id(), ig = gain.id(), is = shift.id();
    return g.record(std::move(out), {ix, ig, is},
                    [ix, ig, is, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& gr, const Tensor& gy) {
                        const std::size_t n = xhat.rows(), width = xhat.cols();
                        const Tensor& gv2 = gr.value(ig);
                        if (gr.requires_grad(ig)) {
                            Tensor& gg = gr.grad_slot(ig);
                            for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t c = 0; c < width; ++c) gg[c] += gy(r, c) * xhat(r, c);
                        }
                        if (gr.requires_grad(is)) {
                            Tensor& gs = gr.grad_slot(is);
                            for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t c = 0; c < width; ++c) gs[c] += gy(r, c);
                        }
                        if (gr.requires_grad(ix)) {
                            Tensor& gx = gr.grad_slot(ix);
                            std::vector<double> dxhat(width);
                            for (std::size_t r = 0; r < n; ++r) {
                                double m1 = 0.0, m2 = 0.0;
                                for (std::size_t c = 0; c < width; ++c) {
                                    dxhat[c] = gy(r, c) * gv2[c];
                                    m1 += dxhat[c];
                                    m2 += dxhat[c] * xhat(r, c);
                                }
                                m1 /= double(width);
                                m2 /= double(width);
                                for (std::size_t c = 0; c < width; ++c)
                                    gx(r, c) += rstd[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
                            }
                        }
                    });
}

Var spectral_normalize(Var weight, const Tensor& u, const Tensor& v, double floor) {
    Graph& g = graph_of(weight);
    const Tensor& wv = weight.value();
    require_rank2("spectral_normalize", wv);
    if (u.size() != wv.rows() || v.size() != wv.cols()) {
        throw DimensionError("spectral_normalize: singular vectors do not match " + shape_string(wv.shape()));
    }
    const double raw = as_vector(u).dot(as_matrix(wv) * as_vector(v));
    const bool floored = !(raw > floor);
    const double sigma = floored ? floor : raw;
    Tensor out = wv;
    as_vector(out) /= sigma;
    const std::size_t iw = weight.id();
    return g.record(std::move(out), {iw}, [iw, u, v, sigma, floored](Graph& gr, const Tensor& gy) {
        auto gw = as_matrix(gr.grad_slot(iw));
        gw += as_matrix(gy) / sigma;
        if (!floored) {
            const double inner = as_vector(gy).dot(as_vector(gr.value(iw)));
            gw.noalias() -= (inner / (sigma * sigma)) * (as_vector(u) * as_vector(v).transpose());
        }
    });
}

}  // namespace smoothac
