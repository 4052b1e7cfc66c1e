#include "pointhead/graph.hpp"

#include <algorithm>
#include <cmath>

namespace pointhead {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

[[noreturn]] void shape_fail(Kernel k, const std::string& detail) {
    throw ShapeError(std::string(kernel_name(k)) + ": " + detail);
}

void check_finite_output(Kernel k, const TensorValue& out) {
    if (!out.all_finite()) {
        throw NumericError(std::string(kernel_name(k)) + " produced a non-finite value");
    }
}

std::int64_t normalize_axis(Kernel k, std::int64_t axis, std::int64_t rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) {
        shape_fail(k, "axis out of range for rank " + std::to_string(rank));
    }
    return axis;
}

// Broadcast rules for elementwise binary kernels: identical shapes, a scalar
// second operand, or a last-dim vector second operand ([C] or [1,C] against
// [..,C]). Only the second operand broadcasts.
enum class Broadcast { Same, Scalar, LastDim };

Broadcast classify_broadcast(Kernel k, const TensorValue& a, const TensorValue& b) {
    if (a.same_shape(b)) return Broadcast::Same;
    if (b.numel() == 1) return Broadcast::Scalar;
    const std::int64_t c = a.rank() >= 1 ? a.shape().back() : 1;
    if (b.rank() == 1 && b.shape()[0] == c) return Broadcast::LastDim;
    if (b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == c) return Broadcast::LastDim;
    shape_fail(k, "operands " + a.shape_str() + " and " + b.shape_str() + " do not conform");
}

double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_slope(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double sigmoid_value(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct AxisSplit {
    std::int64_t outer = 1;
    std::int64_t extent = 1;
    std::int64_t inner = 1;
};

AxisSplit split_at_axis(const std::vector<std::int64_t>& shape, std::int64_t axis) {
    AxisSplit s;
    for (std::int64_t i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    s.extent = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
        s.inner *= shape[i];
    }
    return s;
}

} // namespace

const char* kernel_name(Kernel k) {
    switch (k) {
        case Kernel::Constant: return "constant";
        case Kernel::Parameter: return "parameter";
        case Kernel::MatMul: return "matmul";
        case Kernel::Add: return "add";
        case Kernel::Sub: return "sub";
        case Kernel::Mul: return "mul";
        case Kernel::Concat: return "concat";
        case Kernel::Slice: return "slice";
        case Kernel::Reshape: return "reshape";
        case Kernel::Relu: return "relu";
        case Kernel::Gelu: return "gelu";
        case Kernel::Sigmoid: return "sigmoid";
        case Kernel::Softmax: return "softmax";
        case Kernel::LayerNorm: return "layernorm";
        case Kernel::Conv2d: return "conv2d";
        case Kernel::Mean: return "mean";
        case Kernel::Sum: return "sum";
        case Kernel::CrossEntropyWithSoftmax: return "cross_entropy_with_softmax";
        case Kernel::L1: return "l1";
        case Kernel::BceWithLogits: return "bce_with_logits";
        case Kernel::BilinearSample: return "bilinear_sample";
        case Kernel::BoxMinMax: return "box_minmax";
        case Kernel::GiouLoss: return "giou_loss";
    }
    return "unknown";
}

NodeId Graph::push(GraphNode node) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(node));
    return id;
}

NodeId Graph::constant(TensorValue v) {
    GraphNode n;
    n.kernel = Kernel::Constant;
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Graph::parameter(const ParameterStore& store, const std::string& path) {
    if (store_ == nullptr) {
        store_ = &store;
    } else if (store_ != &store) {
        throw ContractError("one graph records parameters from a single store");
    }
    auto it = param_nodes_.find(path);
    if (it != param_nodes_.end()) {
        return it->second;
    }
    GraphNode n;
    n.kernel = Kernel::Parameter;
    n.value = store.at(path);
    n.param_path = path;
    const NodeId id = push(std::move(n));
    param_nodes_[path] = id;
    return id;
}

const TensorValue& Graph::value(NodeId id) const {
    return node(id).value;
}

const TensorValue& Graph::grad(NodeId id) const {
    const GraphNode& n = node(id);
    if (!n.has_grad) {
        throw ContractError("node has no gradient (not reached by backward)");
    }
    return n.grad;
}

bool Graph::has_grad(NodeId id) const {
    return node(id).has_grad;
}

const GraphNode& Graph::node(NodeId id) const {
    if (id < 0 || id >= size()) {
        throw ContractError("node id out of range");
    }
    return nodes_[static_cast<std::size_t>(id)];
}

NodeId Graph::apply_kernel(Kernel kind, std::initializer_list<NodeId> inputs, KernelAttrs attrs) {
    return apply_kernel(kind, std::span<const NodeId>(inputs.begin(), inputs.size()),
                        std::move(attrs));
}

NodeId Graph::apply_kernel(Kernel kind, std::span<const NodeId> inputs, KernelAttrs attrs) {
    for (NodeId id : inputs) {
        if (id < 0 || id >= size()) {
            throw ContractError("input node id out of range");
        }
    }
    auto need = [&](std::size_t n) {
        if (inputs.size() != n) {
            shape_fail(kind, "expects " + std::to_string(n) + " inputs, got " +
                                 std::to_string(inputs.size()));
        }
    };
    auto in = [&](std::size_t i) -> const TensorValue& {
        return nodes_[static_cast<std::size_t>(inputs[i])].value;
    };

    TensorValue out;
    switch (kind) {
        case Kernel::Constant:
        case Kernel::Parameter:
            throw ContractError("constant/parameter nodes are created via their own entry points");

        case Kernel::MatMul: {
            need(2);
            const TensorValue& a = in(0);
            const TensorValue& b = in(1);
            if (a.rank() != 2 || b.rank() != 2) {
                shape_fail(kind, "expects rank-2 operands, got " + a.shape_str() + " and " +
                                     b.shape_str());
            }
            const std::int64_t m = a.shape()[0];
            const std::int64_t k = a.shape()[1];
            const std::int64_t bk = attrs.transpose_b ? b.shape()[1] : b.shape()[0];
            const std::int64_t n = attrs.transpose_b ? b.shape()[0] : b.shape()[1];
            if (bk != k) {
                shape_fail(kind, "inner extents differ: " + a.shape_str() + " vs " + b.shape_str());
            }
            out = TensorValue::zeros({m, n});
            const double* ap = a.data();
            const double* bp = b.data();
            double* op = out.data();
            if (!attrs.transpose_b) {
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* arow = ap + i * k;
                    double* orow = op + i * n;
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const double av = arow[kk];
                        const double* brow = bp + kk * n;
                        for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
                    }
                }
            } else {
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* arow = ap + i * k;
                    double* orow = op + i * n;
                    for (std::int64_t j = 0; j < n; ++j) {
                        const double* brow = bp + j * k;
                        double acc = 0.0;
                        for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                        orow[j] = acc;
                    }
                }
            }
            break;
        }

        case Kernel::Add:
        case Kernel::Sub:
        case Kernel::Mul: {
            need(2);
            const TensorValue& a = in(0);
            const TensorValue& b = in(1);
            const Broadcast mode = classify_broadcast(kind, a, b);
            out = TensorValue::zeros(a.shape());
            const std::int64_t n = a.numel();
            const std::int64_t c = (mode == Broadcast::LastDim) ? a.shape().back() : 1;
            const double* ap = a.data();
            const double* bp = b.data();
            double* op = out.data();
            for (std::int64_t i = 0; i < n; ++i) {
                const double bv = (mode == Broadcast::Same)     ? bp[i]
                                  : (mode == Broadcast::Scalar) ? bp[0]
                                                                : bp[i % c];
                switch (kind) {
                    case Kernel::Add: op[i] = ap[i] + bv; break;
                    case Kernel::Sub: op[i] = ap[i] - bv; break;
                    default: op[i] = ap[i] * bv; break;
                }
            }
            break;
        }

        case Kernel::Concat: {
            if (inputs.size() < 1) shape_fail(kind, "needs at least one input");
            const TensorValue& first = in(0);
            const std::int64_t axis = normalize_axis(kind, attrs.axis, first.rank());
            std::vector<std::int64_t> shape = first.shape();
            std::int64_t total = first.shape()[static_cast<std::size_t>(axis)];
            for (std::size_t i = 1; i < inputs.size(); ++i) {
                const TensorValue& t = in(i);
                if (t.rank() != first.rank()) shape_fail(kind, "rank mismatch between inputs");
                for (std::int64_t d = 0; d < t.rank(); ++d) {
                    if (d == axis) continue;
                    if (t.shape()[static_cast<std::size_t>(d)] !=
                        first.shape()[static_cast<std::size_t>(d)]) {
                        shape_fail(kind, "extent mismatch off the concat axis: " +
                                             first.shape_str() + " vs " + t.shape_str());
                    }
                }
                total += t.shape()[static_cast<std::size_t>(axis)];
            }
            shape[static_cast<std::size_t>(axis)] = total;
            out = TensorValue::zeros(shape);
            const AxisSplit s = split_at_axis(shape, axis);
            std::int64_t written = 0;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const TensorValue& t = in(i);
                const std::int64_t e = t.shape()[static_cast<std::size_t>(axis)];
                for (std::int64_t o = 0; o < s.outer; ++o) {
                    for (std::int64_t x = 0; x < e; ++x) {
                        const double* src = t.data() + (o * e + x) * s.inner;
                        double* dst = out.data() + (o * s.extent + written + x) * s.inner;
                        std::copy(src, src + s.inner, dst);
                    }
                }
                written += e;
            }
            break;
        }

        case Kernel::Slice: {
            need(1);
            const TensorValue& x = in(0);
            const std::int64_t axis = normalize_axis(kind, attrs.axis, x.rank());
            const std::int64_t e = x.shape()[static_cast<std::size_t>(axis)];
            if (attrs.begin < 0 || attrs.end > e || attrs.begin >= attrs.end) {
                shape_fail(kind, "range [" + std::to_string(attrs.begin) + "," +
                                     std::to_string(attrs.end) + ") invalid for extent " +
                                     std::to_string(e));
            }
            std::vector<std::int64_t> shape = x.shape();
            shape[static_cast<std::size_t>(axis)] = attrs.end - attrs.begin;
            out = TensorValue::zeros(shape);
            const AxisSplit s = split_at_axis(x.shape(), axis);
            const std::int64_t len = attrs.end - attrs.begin;
            for (std::int64_t o = 0; o < s.outer; ++o) {
                const double* src = x.data() + (o * s.extent + attrs.begin) * s.inner;
                double* dst = out.data() + o * len * s.inner;
                std::copy(src, src + len * s.inner, dst);
            }
            break;
        }

        case Kernel::Reshape: {
            need(1);
            const TensorValue& x = in(0);
            if (shape_numel(attrs.shape) != x.numel()) {
                shape_fail(kind, "target shape " + shape_to_string(attrs.shape) +
                                     " does not hold " + std::to_string(x.numel()) + " elements");
            }
            out = TensorValue::of(attrs.shape, x.buffer());
            break;
        }

        case Kernel::Relu: {
            need(1);
            const TensorValue& x = in(0);
            out = TensorValue::zeros(x.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        }

        case Kernel::Gelu: {
            need(1);
            const TensorValue& x = in(0);
            out = TensorValue::zeros(x.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = gelu_value(x[i]);
            break;
        }

        case Kernel::Sigmoid: {
            need(1);
            const TensorValue& x = in(0);
            out = TensorValue::zeros(x.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = sigmoid_value(x[i]);
            break;
        }

        case Kernel::Softmax: {
            need(1);
            const TensorValue& x = in(0);
            if (x.rank() < 1) shape_fail(kind, "requires rank >= 1");
            const std::int64_t axis = normalize_axis(kind, attrs.axis, x.rank());
            attrs.axis = axis;
            const AxisSplit s = split_at_axis(x.shape(), axis);
            out = TensorValue::zeros(x.shape());
            for (std::int64_t o = 0; o < s.outer; ++o) {
                for (std::int64_t i = 0; i < s.inner; ++i) {
                    const auto at = [&](std::int64_t c) {
                        return (o * s.extent + c) * s.inner + i;
                    };
                    double mx = x[at(0)];
                    for (std::int64_t c = 1; c < s.extent; ++c) mx = std::max(mx, x[at(c)]);
                    double z = 0.0;
                    for (std::int64_t c = 0; c < s.extent; ++c) {
                        const double e = std::exp(x[at(c)] - mx);
                        out[at(c)] = e;
                        z += e;
                    }
                    for (std::int64_t c = 0; c < s.extent; ++c) out[at(c)] /= z;
                }
            }
            break;
        }

        case Kernel::LayerNorm: {
            if (inputs.size() != 1 && inputs.size() != 3) {
                shape_fail(kind, "expects x or x,gamma,beta");
            }
            const TensorValue& x = in(0);
            if (x.rank() < 1) shape_fail(kind, "requires rank >= 1");
            const std::int64_t axis = normalize_axis(kind, attrs.axis, x.rank());
            if (axis != x.rank() - 1) shape_fail(kind, "only the last axis is supported");
            const std::int64_t c = x.shape().back();
            const bool affine = inputs.size() == 3;
            if (affine) {
                if (in(1).rank() != 1 || in(1).shape()[0] != c || !in(1).same_shape(in(2))) {
                    shape_fail(kind, "gamma/beta must be rank-1 of extent " + std::to_string(c));
                }
            }
            const std::int64_t rows = x.numel() / c;
            out = TensorValue::zeros(x.shape());
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* xr = x.data() + r * c;
                double* orow = out.data() + r * c;
                double mu = 0.0;
                for (std::int64_t j = 0; j < c; ++j) mu += xr[j];
                mu /= static_cast<double>(c);
                double var = 0.0;
                for (std::int64_t j = 0; j < c; ++j) {
                    const double d = xr[j] - mu;
                    var += d * d;
                }
                var /= static_cast<double>(c);
                const double inv = 1.0 / std::sqrt(var + attrs.eps);
                for (std::int64_t j = 0; j < c; ++j) {
                    double v = (xr[j] - mu) * inv;
                    if (affine) v = v * in(1)[j] + in(2)[j];
                    orow[j] = v;
                }
            }
            break;
        }

        case Kernel::Conv2d: {
            if (inputs.size() != 2 && inputs.size() != 3) {
                shape_fail(kind, "expects x,w or x,w,bias");
            }
            const TensorValue& x = in(0);
            const TensorValue& w = in(1);
            if (x.rank() != 3) shape_fail(kind, "input must be H x W x C, got " + x.shape_str());
            if (w.rank() != 4 || w.shape()[1] != 3 || w.shape()[2] != 3) {
                shape_fail(kind, "weights must be Cout x 3 x 3 x Cin, got " + w.shape_str());
            }
            if (w.shape()[3] != x.shape()[2]) {
                shape_fail(kind, "channel mismatch: " + x.shape_str() + " vs " + w.shape_str());
            }
            if (attrs.stride != 1 && attrs.stride != 2) {
                shape_fail(kind, "stride must be 1 or 2");
            }
            const std::int64_t h = x.shape()[0], wd = x.shape()[1], cin = x.shape()[2];
            const std::int64_t cout = w.shape()[0];
            if (inputs.size() == 3 && (in(2).rank() != 1 || in(2).shape()[0] != cout)) {
                shape_fail(kind, "bias must be rank-1 of extent " + std::to_string(cout));
            }
            const std::int64_t s = attrs.stride;
            const std::int64_t ho = (h - 1) / s + 1;
            const std::int64_t wo = (wd - 1) / s + 1;
            out = TensorValue::zeros({ho, wo, cout});
            const double* xp = x.data();
            const double* wp = w.data();
            for (std::int64_t i = 0; i < ho; ++i) {
                for (std::int64_t j = 0; j < wo; ++j) {
                    double* orow = out.data() + (i * wo + j) * cout;
                    if (inputs.size() == 3) {
                        for (std::int64_t co = 0; co < cout; ++co) orow[co] = in(2)[co];
                    }
                    for (std::int64_t kh = 0; kh < 3; ++kh) {
                        const std::int64_t hi = i * s - 1 + kh;
                        if (hi < 0 || hi >= h) continue;
                        for (std::int64_t kw = 0; kw < 3; ++kw) {
                            const std::int64_t wi = j * s - 1 + kw;
                            if (wi < 0 || wi >= wd) continue;
                            const double* xrow = xp + (hi * wd + wi) * cin;
                            for (std::int64_t co = 0; co < cout; ++co) {
                                const double* wrow = wp + ((co * 3 + kh) * 3 + kw) * cin;
                                double acc = 0.0;
                                for (std::int64_t ci = 0; ci < cin; ++ci) {
                                    acc += xrow[ci] * wrow[ci];
                                }
                                orow[co] += acc;
                            }
                        }
                    }
                }
            }
            break;
        }

        case Kernel::Mean:
        case Kernel::Sum: {
            need(1);
            const TensorValue& x = in(0);
            double acc = 0.0;
            for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
            if (kind == Kernel::Mean) acc /= static_cast<double>(x.numel());
            out = TensorValue::scalar(acc);
            break;
        }

        case Kernel::CrossEntropyWithSoftmax: {
            need(2);
            const TensorValue& x = in(0);
            const TensorValue& t = in(1);
            if (!x.same_shape(t)) {
                shape_fail(kind, "logits " + x.shape_str() + " vs target " + t.shape_str());
            }
            const bool vec = x.rank() == 1 || (x.rank() == 2 && x.shape()[0] == 1);
            if (!vec) shape_fail(kind, "expects a single logit vector, got " + x.shape_str());
            double mx = x[0];
            for (std::int64_t i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
            double z = 0.0;
            for (std::int64_t i = 0; i < x.numel(); ++i) z += std::exp(x[i] - mx);
            const double lse = mx + std::log(z);
            double tsum = 0.0, tx = 0.0;
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                tsum += t[i];
                tx += t[i] * x[i];
            }
            out = TensorValue::scalar(tsum * lse - tx);
            break;
        }

        case Kernel::L1: {
            need(2);
            const TensorValue& a = in(0);
            const TensorValue& b = in(1);
            if (!a.same_shape(b)) {
                shape_fail(kind, "operands " + a.shape_str() + " and " + b.shape_str());
            }
            double acc = 0.0;
            for (std::int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a[i] - b[i]);
            out = TensorValue::scalar(acc / static_cast<double>(a.numel()));
            break;
        }

        case Kernel::BceWithLogits: {
            need(2);
            const TensorValue& x = in(0);
            const TensorValue& y = in(1);
            if (!x.same_shape(y)) {
                shape_fail(kind, "logits " + x.shape_str() + " vs labels " + y.shape_str());
            }
            double acc = 0.0;
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                acc += std::max(x[i], 0.0) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
            }
            out = TensorValue::scalar(acc / static_cast<double>(x.numel()));
            break;
        }

        case Kernel::BilinearSample: {
            need(2);
            const TensorValue& f = in(0);
            const TensorValue& p = in(1);
            if (f.rank() != 3 || f.shape()[0] < 2 || f.shape()[1] < 2) {
                shape_fail(kind, "feature map must be H x W x C with H,W >= 2, got " +
                                     f.shape_str());
            }
            if (p.rank() != 2 || p.shape()[1] != 2) {
                shape_fail(kind, "points must be K x 2, got " + p.shape_str());
            }
            const std::int64_t h = f.shape()[0], w = f.shape()[1], c = f.shape()[2];
            const std::int64_t k = p.shape()[0];
            out = TensorValue::zeros({k, c});
            for (std::int64_t i = 0; i < k; ++i) {
                const double xc = std::clamp(p.at(i, 0), 0.0, static_cast<double>(w - 1));
                const double yc = std::clamp(p.at(i, 1), 0.0, static_cast<double>(h - 1));
                const std::int64_t x0 = std::min(static_cast<std::int64_t>(std::floor(xc)), w - 2);
                const std::int64_t y0 = std::min(static_cast<std::int64_t>(std::floor(yc)), h - 2);
                const double fx = xc - static_cast<double>(x0);
                const double fy = yc - static_cast<double>(y0);
                const double* f00 = f.data() + (y0 * w + x0) * c;
                const double* f01 = f00 + c;
                const double* f10 = f00 + w * c;
                const double* f11 = f10 + c;
                double* orow = out.data() + i * c;
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    orow[ch] = (1.0 - fy) * ((1.0 - fx) * f00[ch] + fx * f01[ch]) +
                               fy * ((1.0 - fx) * f10[ch] + fx * f11[ch]);
                }
            }
            break;
        }

        case Kernel::BoxMinMax: {
            need(1);
            const TensorValue& p = in(0);
            if (p.rank() != 2 || p.shape()[1] != 2 || p.shape()[0] < 1) {
                shape_fail(kind, "points must be K x 2 with K >= 1, got " + p.shape_str());
            }
            const std::int64_t k = p.shape()[0];
            double x1 = p.at(0, 0), y1 = p.at(0, 1), x2 = p.at(0, 0), y2 = p.at(0, 1);
            for (std::int64_t i = 1; i < k; ++i) {
                x1 = std::min(x1, p.at(i, 0));
                y1 = std::min(y1, p.at(i, 1));
                x2 = std::max(x2, p.at(i, 0));
                y2 = std::max(y2, p.at(i, 1));
            }
            out = TensorValue::of({4}, {x1, y1, x2, y2});
            break;
        }

        case Kernel::GiouLoss: {
            need(2);
            const TensorValue& p = in(0);
            const TensorValue& g = in(1);
            if (p.rank() != 1 || p.shape()[0] != 4 || !g.same_shape(p)) {
                shape_fail(kind, "expects two rank-1 boxes of extent 4");
            }
            if (p[0] > p[2] || p[1] > p[3] || g[0] > g[2] || g[1] > g[3]) {
                throw ContractError("giou_loss: box corners must satisfy x1<=x2, y1<=y2");
            }
            const double iw = std::max(0.0, std::min(p[2], g[2]) - std::max(p[0], g[0]));
            const double ih = std::max(0.0, std::min(p[3], g[3]) - std::max(p[1], g[1]));
            const double inter = iw * ih;
            const double ap = (p[2] - p[0]) * (p[3] - p[1]);
            const double ag = (g[2] - g[0]) * (g[3] - g[1]);
            const double uni = ap + ag - inter;
            const double cw = std::max(p[2], g[2]) - std::min(p[0], g[0]);
            const double ch = std::max(p[3], g[3]) - std::min(p[1], g[1]);
            const double carea = cw * ch;
            if (uni <= 0.0 || carea <= 0.0) {
                throw DegeneracyError("giou_loss: degenerate boxes with zero union area");
            }
            const double giou = inter / uni - (carea - uni) / carea;
            out = TensorValue::scalar(1.0 - giou);
            break;
        }
    }

    check_finite_output(kind, out);
    GraphNode n;
    n.kernel = kind;
    n.inputs.assign(inputs.begin(), inputs.end());
    n.attrs = std::move(attrs);
    n.value = std::move(out);
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_b) {
    KernelAttrs at;
    at.transpose_b = transpose_b;
    return apply_kernel(Kernel::MatMul, {a, b}, std::move(at));
}

NodeId Graph::add(NodeId a, NodeId b) { return apply_kernel(Kernel::Add, {a, b}); }
NodeId Graph::sub(NodeId a, NodeId b) { return apply_kernel(Kernel::Sub, {a, b}); }
NodeId Graph::mul(NodeId a, NodeId b) { return apply_kernel(Kernel::Mul, {a, b}); }

NodeId Graph::concat(std::span<const NodeId> parts, std::int64_t axis) {
    KernelAttrs at;
    at.axis = axis;
    return apply_kernel(Kernel::Concat, parts, std::move(at));
}

NodeId Graph::concat(std::initializer_list<NodeId> parts, std::int64_t axis) {
    return concat(std::span<const NodeId>(parts.begin(), parts.size()), axis);
}

NodeId Graph::slice(NodeId x, std::int64_t axis, std::int64_t begin, std::int64_t end) {
    KernelAttrs at;
    at.axis = axis;
    at.begin = begin;
    at.end = end;
    return apply_kernel(Kernel::Slice, {x}, std::move(at));
}

NodeId Graph::reshape(NodeId x, std::vector<std::int64_t> shape) {
    KernelAttrs at;
    at.shape = std::move(shape);
    return apply_kernel(Kernel::Reshape, {x}, std::move(at));
}

NodeId Graph::relu(NodeId x) { return apply_kernel(Kernel::Relu, {x}); }
NodeId Graph::gelu(NodeId x) { return apply_kernel(Kernel::Gelu, {x}); }
NodeId Graph::sigmoid(NodeId x) { return apply_kernel(Kernel::Sigmoid, {x}); }

NodeId Graph::softmax(NodeId x, std::int64_t axis) {
    KernelAttrs at;
    at.axis = axis;
    return apply_kernel(Kernel::Softmax, {x}, std::move(at));
}

NodeId Graph::layernorm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    KernelAttrs at;
    at.axis = -1;
    at.eps = eps;
    return apply_kernel(Kernel::LayerNorm, {x, gamma, beta}, std::move(at));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId bias, std::int64_t stride) {
    KernelAttrs at;
    at.stride = stride;
    return apply_kernel(Kernel::Conv2d, {x, w, bias}, std::move(at));
}

NodeId Graph::mean(NodeId x) { return apply_kernel(Kernel::Mean, {x}); }
NodeId Graph::sum(NodeId x) { return apply_kernel(Kernel::Sum, {x}); }

NodeId Graph::cross_entropy_with_softmax(NodeId logits, NodeId target) {
    return apply_kernel(Kernel::CrossEntropyWithSoftmax, {logits, target});
}

NodeId Graph::l1(NodeId a, NodeId b) { return apply_kernel(Kernel::L1, {a, b}); }

NodeId Graph::bce_with_logits(NodeId logits, NodeId labels) {
    return apply_kernel(Kernel::BceWithLogits, {logits, labels});
}

NodeId Graph::bilinear_sample(NodeId fmap, NodeId points) {
    return apply_kernel(Kernel::BilinearSample, {fmap, points});
}

NodeId Graph::box_minmax(NodeId points) { return apply_kernel(Kernel::BoxMinMax, {points}); }

NodeId Graph::giou_loss(NodeId pred_box, NodeId gt_box) {
    return apply_kernel(Kernel::GiouLoss, {pred_box, gt_box});
}

void Graph::accumulate(NodeId id, const TensorValue& contribution) {
    GraphNode& n = mut(id);
    if (!n.has_grad) {
        n.grad = TensorValue::zeros(n.value.shape());
        n.has_grad = true;
    }
    for (std::int64_t i = 0; i < contribution.numel(); ++i) n.grad[i] += contribution[i];
}

void Graph::accumulate_flat(NodeId id, std::int64_t offset, double v) {
    GraphNode& n = mut(id);
    if (!n.has_grad) {
        n.grad = TensorValue::zeros(n.value.shape());
        n.has_grad = true;
    }
    n.grad[offset] += v;
}

GradientMap Graph::backward(NodeId root) {
    if (root < 0 || root >= size()) {
        throw ContractError("backward root out of range");
    }
    if (backward_done_ && nodes_at_backward_ == size()) {
        throw ContractError("backward already invoked on this recording");
    }
    const GraphNode& r = node(root);
    if (r.value.numel() != 1) {
        throw ContractError("backward requires a scalar root, got " + r.value.shape_str());
    }
    for (GraphNode& n : nodes_) {
        n.has_grad = false;
        n.grad = TensorValue();
    }
    backward_done_ = true;
    nodes_at_backward_ = size();

    accumulate(root, TensorValue::full(r.value.shape(), 1.0));
    for (NodeId id = root; id >= 0; --id) {
        if (nodes_[static_cast<std::size_t>(id)].has_grad) {
            dispatch_vjp(id);
        }
    }

    GradientMap grads;
    if (store_ != nullptr) {
        for (const auto& [path, entry] : *store_) {
            auto it = param_nodes_.find(path);
            if (it != param_nodes_.end() && nodes_[static_cast<std::size_t>(it->second)].has_grad) {
                grads[path] = nodes_[static_cast<std::size_t>(it->second)].grad;
            } else {
                grads[path] = TensorValue::zeros(entry.value.shape());
            }
        }
    }
    return grads;
}

void Graph::dispatch_vjp(NodeId id) {
    const GraphNode& n = node(id);
    const TensorValue& g = n.grad;
    auto input_value = [&](std::size_t i) -> const TensorValue& {
        return nodes_[static_cast<std::size_t>(n.inputs[i])].value;
    };

    switch (n.kernel) {
        case Kernel::Constant:
        case Kernel::Parameter:
            return;

        case Kernel::MatMul: {
            const TensorValue& a = input_value(0);
            const TensorValue& b = input_value(1);
            const std::int64_t m = a.shape()[0];
            const std::int64_t k = a.shape()[1];
            const std::int64_t nn = n.value.shape()[1];
            TensorValue da = TensorValue::zeros(a.shape());
            TensorValue db = TensorValue::zeros(b.shape());
            if (!n.attrs.transpose_b) {
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * nn;
                    double* darow = da.data() + i * k;
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const double* brow = b.data() + kk * nn;
                        double acc = 0.0;
                        for (std::int64_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
                        darow[kk] = acc;
                    }
                    const double* arow = a.data() + i * k;
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const double av = arow[kk];
                        double* dbrow = db.data() + kk * nn;
                        for (std::int64_t j = 0; j < nn; ++j) dbrow[j] += av * grow[j];
                    }
                }
            } else {
                // Stored b is [n,k]; effective operand is its transpose.
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* grow = g.data() + i * nn;
                    const double* arow = a.data() + i * k;
                    double* darow = da.data() + i * k;
                    for (std::int64_t j = 0; j < nn; ++j) {
                        const double gv = grow[j];
                        const double* brow = b.data() + j * k;
                        double* dbrow = db.data() + j * k;
                        for (std::int64_t kk = 0; kk < k; ++kk) {
                            darow[kk] += gv * brow[kk];
                            dbrow[kk] += gv * arow[kk];
                        }
                    }
                }
            }
            accumulate(n.inputs[0], da);
            accumulate(n.inputs[1], db);
            return;
        }

        case Kernel::Add:
        case Kernel::Sub:
        case Kernel::Mul: {
            const TensorValue& a = input_value(0);
            const TensorValue& b = input_value(1);
            const Broadcast mode = classify_broadcast(n.kernel, a, b);
            const std::int64_t cnt = a.numel();
            const std::int64_t c = (mode == Broadcast::LastDim) ? a.shape().back() : 1;
            TensorValue da = TensorValue::zeros(a.shape());
            TensorValue db = TensorValue::zeros(b.shape());
            for (std::int64_t i = 0; i < cnt; ++i) {
                const std::int64_t bi = (mode == Broadcast::Same)     ? i
                                        : (mode == Broadcast::Scalar) ? 0
                                                                      : i % c;
                switch (n.kernel) {
                    case Kernel::Add:
                        da[i] += g[i];
                        db[bi] += g[i];
                        break;
                    case Kernel::Sub:
                        da[i] += g[i];
                        db[bi] -= g[i];
                        break;
                    default:
                        da[i] += g[i] * b[bi];
                        db[bi] += g[i] * a[i];
                        break;
                }
            }
            accumulate(n.inputs[0], da);
            accumulate(n.inputs[1], db);
            return;
        }

        case Kernel::Concat: {
            const std::int64_t axis = normalize_axis(n.kernel, n.attrs.axis, n.value.rank());
            const AxisSplit s = split_at_axis(n.value.shape(), axis);
            std::int64_t taken = 0;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                const TensorValue& t = input_value(i);
                const std::int64_t e = t.shape()[static_cast<std::size_t>(axis)];
                TensorValue dt = TensorValue::zeros(t.shape());
                for (std::int64_t o = 0; o < s.outer; ++o) {
                    for (std::int64_t x = 0; x < e; ++x) {
                        const double* src = g.data() + (o * s.extent + taken + x) * s.inner;
                        double* dst = dt.data() + (o * e + x) * s.inner;
                        std::copy(src, src + s.inner, dst);
                    }
                }
                accumulate(n.inputs[i], dt);
                taken += e;
            }
            return;
        }

        case Kernel::Slice: {
            const TensorValue& x = input_value(0);
            const std::int64_t axis = normalize_axis(n.kernel, n.attrs.axis, x.rank());
            const AxisSplit s = split_at_axis(x.shape(), axis);
            const std::int64_t len = n.attrs.end - n.attrs.begin;
            TensorValue dx = TensorValue::zeros(x.shape());
            for (std::int64_t o = 0; o < s.outer; ++o) {
                const double* src = g.data() + o * len * s.inner;
                double* dst = dx.data() + (o * s.extent + n.attrs.begin) * s.inner;
                std::copy(src, src + len * s.inner, dst);
            }
            accumulate(n.inputs[0], dx);
            return;
        }

        case Kernel::Reshape: {
            const TensorValue& x = input_value(0);
            accumulate(n.inputs[0], TensorValue::of(x.shape(), g.buffer()));
            return;
        }

        case Kernel::Relu: {
            const TensorValue& x = input_value(0);
            TensorValue dx = TensorValue::zeros(x.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
            accumulate(n.inputs[0], dx);
            return;
        }

        case Kernel::Gelu: {
            const TensorValue& x = input_value(0);
            TensorValue dx = TensorValue::zeros(x.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) dx[i] = g[i] * gelu_slope(x[i]);
            accumulate(n.inputs[0], dx);
            return;
        }

        case Kernel::Sigmoid: {
            TensorValue dx = TensorValue::zeros(n.value.shape());
            for (std::int64_t i = 0; i < n.value.numel(); ++i) {
                dx[i] = g[i] * n.value[i] * (1.0 - n.value[i]);
            }
            accumulate(n.inputs[0], dx);
            return;
        }

        case Kernel::Softmax: {
            const TensorValue& y = n.value;
            const std::int64_t axis = normalize_axis(n.kernel, n.attrs.axis, y.rank());
            const AxisSplit s = split_at_axis(y.shape(), axis);
            TensorValue dx = TensorValue::zeros(y.shape());
            for (std::int64_t o = 0; o < s.outer; ++o) {
                for (std::int64_t i = 0; i < s.inner; ++i) {
                    const auto at = [&](std::int64_t c) {
                        return (o * s.extent + c) * s.inner + i;
                    };
                    double dot = 0.0;
                    for (std::int64_t c = 0; c < s.extent; ++c) dot += g[at(c)] * y[at(c)];
                    for (std::int64_t c = 0; c < s.extent; ++c) {
                        dx[at(c)] = (g[at(c)] - dot) * y[at(c)];
                    }
                }
            }
            accumulate(n.inputs[0], dx);
            return;
        }

        case Kernel::LayerNorm: {
            const TensorValue& x = input_value(0);
            const bool affine = n.inputs.size() == 3;
            const std::int64_t c = x.shape().back();
            const std::int64_t rows = x.numel() / c;
            TensorValue dx = TensorValue::zeros(x.shape());
            TensorValue dgamma = affine ? TensorValue::zeros({c}) : TensorValue();
            TensorValue dbeta = affine ? TensorValue::zeros({c}) : TensorValue();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* xr = x.data() + r * c;
                const double* gr = g.data() + r * c;
                double mu = 0.0;
                for (std::int64_t j = 0; j < c; ++j) mu += xr[j];
                mu /= static_cast<double>(c);
                double var = 0.0;
                for (std::int64_t j = 0; j < c; ++j) {
                    const double d = xr[j] - mu;
                    var += d * d;
                }
                var /= static_cast<double>(c);
                const double inv = 1.0 / std::sqrt(var + n.attrs.eps);
                double s1 = 0.0, s2 = 0.0;
                for (std::int64_t j = 0; j < c; ++j) {
                    const double xh = (xr[j] - mu) * inv;
                    const double gg = affine ? gr[j] * input_value(1)[j] : gr[j];
                    s1 += gg;
                    s2 += gg * xh;
                    if (affine) {
                        dgamma[j] += gr[j] * xh;
                        dbeta[j] += gr[j];
                    }
                }
                const double invc = 1.0 / static_cast<double>(c);
                for (std::int64_t j = 0; j < c; ++j) {
                    const double xh = (xr[j] - mu) * inv;
                    const double gg = affine ? gr[j] * input_value(1)[j] : gr[j];
                    dx.data()[r * c + j] = inv * (gg - s1 * invc - xh * s2 * invc);
                }
            }
            accumulate(n.inputs[0], dx);
            if (affine) {
                accumulate(n.inputs[1], dgamma);
                accumulate(n.inputs[2], dbeta);
            }
            return;
        }

        case Kernel::Conv2d: {
            const TensorValue& x = input_value(0);
            const TensorValue& w = input_value(1);
            const std::int64_t h = x.shape()[0], wd = x.shape()[1], cin = x.shape()[2];
            const std::int64_t cout = w.shape()[0];
            const std::int64_t s = n.attrs.stride;
            const std::int64_t ho = n.value.shape()[0], wo = n.value.shape()[1];
            TensorValue dx = TensorValue::zeros(x.shape());
            TensorValue dw = TensorValue::zeros(w.shape());
            const bool has_bias = n.inputs.size() == 3;
            TensorValue db = has_bias ? TensorValue::zeros({cout}) : TensorValue();
            for (std::int64_t i = 0; i < ho; ++i) {
                for (std::int64_t j = 0; j < wo; ++j) {
                    const double* grow = g.data() + (i * wo + j) * cout;
                    if (has_bias) {
                        for (std::int64_t co = 0; co < cout; ++co) db[co] += grow[co];
                    }
                    for (std::int64_t kh = 0; kh < 3; ++kh) {
                        const std::int64_t hi = i * s - 1 + kh;
                        if (hi < 0 || hi >= h) continue;
                        for (std::int64_t kw = 0; kw < 3; ++kw) {
                            const std::int64_t wi = j * s - 1 + kw;
                            if (wi < 0 || wi >= wd) continue;
                            const double* xrow = x.data() + (hi * wd + wi) * cin;
                            double* dxrow = dx.data() + (hi * wd + wi) * cin;
                            for (std::int64_t co = 0; co < cout; ++co) {
                                const double gv = grow[co];
                                if (gv == 0.0) continue;
                                const double* wrow = w.data() + ((co * 3 + kh) * 3 + kw) * cin;
                                double* dwrow = dw.data() + ((co * 3 + kh) * 3 + kw) * cin;
                                for (std::int64_t ci = 0; ci < cin; ++ci) {
                                    dxrow[ci] += gv * wrow[ci];
                                    dwrow[ci] += gv * xrow[ci];
                                }
                            }
                        }
                    }
                }
            }
            accumulate(n.inputs[0], dx);
            accumulate(n.inputs[1], dw);
            if (has_bias) accumulate(n.inputs[2], db);
            return;
        }

        case Kernel::Mean:
        case Kernel::Sum: {
            const TensorValue& x = input_value(0);
            const double gv = g[0];
            const double scale =
                n.kernel == Kernel::Mean ? gv / static_cast<double>(x.numel()) : gv;
            accumulate(n.inputs[0], TensorValue::full(x.shape(), scale));
            return;
        }

        case Kernel::CrossEntropyWithSoftmax: {
            const TensorValue& x = input_value(0);
            const TensorValue& t = input_value(1);
            const double gv = g[0];
            double mx = x[0];
            for (std::int64_t i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
            double z = 0.0;
            for (std::int64_t i = 0; i < x.numel(); ++i) z += std::exp(x[i] - mx);
            const double lse = mx + std::log(z);
            double tsum = 0.0;
            for (std::int64_t i = 0; i < t.numel(); ++i) tsum += t[i];
            TensorValue dx = TensorValue::zeros(x.shape());
            TensorValue dt = TensorValue::zeros(t.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                const double soft = std::exp(x[i] - mx) / z;
                dx[i] = gv * (tsum * soft - t[i]);
                dt[i] = gv * (lse - x[i]);
            }
            accumulate(n.inputs[0], dx);
            accumulate(n.inputs[1], dt);
            return;
        }

        case Kernel::L1: {
            const TensorValue& a = input_value(0);
            const TensorValue& b = input_value(1);
            const double gv = g[0] / static_cast<double>(a.numel());
            TensorValue da = TensorValue::zeros(a.shape());
            TensorValue db = TensorValue::zeros(b.shape());
            for (std::int64_t i = 0; i < a.numel(); ++i) {
                const double d = a[i] - b[i];
                const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                da[i] = gv * sgn;
                db[i] = -gv * sgn;
            }
            accumulate(n.inputs[0], da);
            accumulate(n.inputs[1], db);
            return;
        }

        case Kernel::BceWithLogits: {
            const TensorValue& x = input_value(0);
            const TensorValue& y = input_value(1);
            const double gv = g[0] / static_cast<double>(x.numel());
            TensorValue dx = TensorValue::zeros(x.shape());
            TensorValue dy = TensorValue::zeros(y.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                dx[i] = gv * (sigmoid_value(x[i]) - y[i]);
                dy[i] = -gv * x[i];
            }
            accumulate(n.inputs[0], dx);
            accumulate(n.inputs[1], dy);
            return;
        }

        case Kernel::BilinearSample: {
            const TensorValue& f = input_value(0);
            const TensorValue& p = input_value(1);
            const std::int64_t h = f.shape()[0], w = f.shape()[1], c = f.shape()[2];
            const std::int64_t k = p.shape()[0];
            TensorValue df = TensorValue::zeros(f.shape());
            TensorValue dp = TensorValue::zeros(p.shape());
            for (std::int64_t i = 0; i < k; ++i) {
                const double xr = p.at(i, 0);
                const double yr = p.at(i, 1);
                const double xc = std::clamp(xr, 0.0, static_cast<double>(w - 1));
                const double yc = std::clamp(yr, 0.0, static_cast<double>(h - 1));
                const std::int64_t x0 = std::min(static_cast<std::int64_t>(std::floor(xc)), w - 2);
                const std::int64_t y0 = std::min(static_cast<std::int64_t>(std::floor(yc)), h - 2);
                const double fx = xc - static_cast<double>(x0);
                const double fy = yc - static_cast<double>(y0);
                const bool x_active = xr > 0.0 && xr < static_cast<double>(w - 1);
                const bool y_active = yr > 0.0 && yr < static_cast<double>(h - 1);
                const double* grow = g.data() + i * c;
                const std::int64_t base00 = (y0 * w + x0) * c;
                const std::int64_t base01 = base00 + c;
                const std::int64_t base10 = base00 + w * c;
                const std::int64_t base11 = base10 + c;
                double gx = 0.0, gy = 0.0;
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const double gv = grow[ch];
                    df[base00 + ch] += gv * (1.0 - fx) * (1.0 - fy);
                    df[base01 + ch] += gv * fx * (1.0 - fy);
                    df[base10 + ch] += gv * (1.0 - fx) * fy;
                    df[base11 + ch] += gv * fx * fy;
                    const double f00 = f[base00 + ch], f01 = f[base01 + ch];
                    const double f10 = f[base10 + ch], f11 = f[base11 + ch];
                    gx += gv * ((1.0 - fy) * (f01 - f00) + fy * (f11 - f10));
                    gy += gv * ((1.0 - fx) * (f10 - f00) + fx * (f11 - f01));
                }
                if (x_active) dp.at(i, 0) = gx;
                if (y_active) dp.at(i, 1) = gy;
            }
            accumulate(n.inputs[0], df);
            accumulate(n.inputs[1], dp);
            return;
        }

        case Kernel::BoxMinMax: {
            const TensorValue& p = input_value(0);
            const std::int64_t k = p.shape()[0];
            std::int64_t ix1 = 0, iy1 = 0, ix2 = 0, iy2 = 0;
            for (std::int64_t i = 1; i < k; ++i) {
                if (p.at(i, 0) < p.at(ix1, 0)) ix1 = i;
                if (p.at(i, 1) < p.at(iy1, 1)) iy1 = i;
                if (p.at(i, 0) > p.at(ix2, 0)) ix2 = i;
                if (p.at(i, 1) > p.at(iy2, 1)) iy2 = i;
            }
            accumulate_flat(n.inputs[0], ix1 * 2 + 0, g[0]);
            accumulate_flat(n.inputs[0], iy1 * 2 + 1, g[1]);
            accumulate_flat(n.inputs[0], ix2 * 2 + 0, g[2]);
            accumulate_flat(n.inputs[0], iy2 * 2 + 1, g[3]);
            return;
        }

        case Kernel::GiouLoss: {
            const TensorValue& p = input_value(0);
            const TensorValue& q = input_value(1);
            const double gv = g[0];
            // Recompute forward intermediates; ties route to the first operand.
            const double ix1 = std::max(p[0], q[0]), iy1 = std::max(p[1], q[1]);
            const double ix2 = std::min(p[2], q[2]), iy2 = std::min(p[3], q[3]);
            const double iw = std::max(0.0, ix2 - ix1), ih = std::max(0.0, iy2 - iy1);
            const double inter = iw * ih;
            const double ap = (p[2] - p[0]) * (p[3] - p[1]);
            const double ag = (q[2] - q[0]) * (q[3] - q[1]);
            const double uni = ap + ag - inter;
            const double cw = std::max(p[2], q[2]) - std::min(p[0], q[0]);
            const double ch = std::max(p[3], q[3]) - std::min(p[1], q[1]);
            const double carea = cw * ch;
            // loss = 2 - inter/uni - uni/carea, with uni = ap + ag - inter.
            const double dl_dinter = -(uni + inter) / (uni * uni) + 1.0 / carea;
            const double dl_darea = inter / (uni * uni) - 1.0 / carea;
            const double dl_dcarea = uni / (carea * carea);
            TensorValue dp = TensorValue::zeros({4});
            TensorValue dq = TensorValue::zeros({4});
            // Intersection corners.
            if (iw > 0.0 && ih > 0.0) {
                auto& dx1 = (p[0] >= q[0]) ? dp : dq;
                auto& dy1 = (p[1] >= q[1]) ? dp : dq;
                auto& dx2 = (p[2] <= q[2]) ? dp : dq;
                auto& dy2 = (p[3] <= q[3]) ? dp : dq;
                dx1[0] += gv * dl_dinter * (-ih);
                dx2[2] += gv * dl_dinter * ih;
                dy1[1] += gv * dl_dinter * (-iw);
                dy2[3] += gv * dl_dinter * iw;
            }
            // Own areas.
            const double pw = p[2] - p[0], phh = p[3] - p[1];
            dp[0] += gv * dl_darea * (-phh);
            dp[2] += gv * dl_darea * phh;
            dp[1] += gv * dl_darea * (-pw);
            dp[3] += gv * dl_darea * pw;
            const double qw = q[2] - q[0], qh = q[3] - q[1];
            dq[0] += gv * dl_darea * (-qh);
            dq[2] += gv * dl_darea * qh;
            dq[1] += gv * dl_darea * (-qw);
            dq[3] += gv * dl_darea * qw;
            // Enclosing box.
            {
                auto& dx1 = (p[0] <= q[0]) ? dp : dq;
                auto& dy1 = (p[1] <= q[1]) ? dp : dq;
                auto& dx2 = (p[2] >= q[2]) ? dp : dq;
                auto& dy2 = (p[3] >= q[3]) ? dp : dq;
                dx1[0] += gv * dl_dcarea * (-ch);
                dx2[2] += gv * dl_dcarea * ch;
                dy1[1] += gv * dl_dcarea * (-cw);
                dy2[3] += gv * dl_dcarea * cw;
            }
            accumulate(n.inputs[0], dp);
            accumulate(n.inputs[1], dq);
            return;
        }
    }
}

} // namespace pointhead
