#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pointhead/param_store.hpp"
#include "pointhead/tensor.hpp"

namespace pointhead {

/// Kernel kinds recorded on the tape. Values are computed eagerly at record
/// time; vjps run in reverse recording order on backward().
enum class Kernel {
    Constant,
    Parameter,
    MatMul,
    Add,
    Sub,
    Mul,
    Concat,
    Slice,
    Reshape,
    Relu,
    Gelu,
    Sigmoid,
    Softmax,
    LayerNorm,
    Conv2d,
    Mean,
    Sum,
    CrossEntropyWithSoftmax,
    L1,
    BceWithLogits,
    BilinearSample,
    BoxMinMax,
    GiouLoss,
};

const char* kernel_name(Kernel k);

struct KernelAttrs {
    std::int64_t axis = -1;                // concat / slice / softmax / layernorm
    std::int64_t begin = 0;                // slice
    std::int64_t end = 0;                  // slice
    std::int64_t stride = 1;               // conv2d
    double eps = 1e-5;                     // layernorm
    bool transpose_b = false;              // matmul
    std::vector<std::int64_t> shape;       // reshape target
};

using NodeId = std::int32_t;

struct GraphNode {
    Kernel kernel;
    std::vector<NodeId> inputs;
    KernelAttrs attrs;
    TensorValue value;
    TensorValue grad;
    bool has_grad = false;
    std::string param_path; // Parameter nodes only
};

using GradientMap = std::map<std::string, TensorValue>;

/// Eagerly-evaluated reverse-mode tape. One graph is confined to one thread;
/// recorded values are immutable once produced. Parameter nodes snapshot the
/// store value at record time and are cached per path, so each parameter has
/// exactly one node per graph.
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    NodeId constant(TensorValue v);
    NodeId constant_scalar(double v) { return constant(TensorValue::scalar(v)); }
    NodeId parameter(const ParameterStore& store, const std::string& path);

    NodeId apply_kernel(Kernel kind, std::span<const NodeId> inputs, KernelAttrs attrs = {});
    NodeId apply_kernel(Kernel kind, std::initializer_list<NodeId> inputs, KernelAttrs attrs = {});

    // Convenience wrappers over apply_kernel.
    NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId concat(std::span<const NodeId> parts, std::int64_t axis);
    NodeId concat(std::initializer_list<NodeId> parts, std::int64_t axis);
    NodeId slice(NodeId x, std::int64_t axis, std::int64_t begin, std::int64_t end);
    NodeId reshape(NodeId x, std::vector<std::int64_t> shape);
    NodeId relu(NodeId x);
    NodeId gelu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId softmax(NodeId x, std::int64_t axis = -1);
    NodeId layernorm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId conv2d(NodeId x, NodeId w, NodeId bias, std::int64_t stride);
    NodeId mean(NodeId x);
    NodeId sum(NodeId x);
    NodeId cross_entropy_with_softmax(NodeId logits, NodeId target);
    NodeId l1(NodeId a, NodeId b);
    NodeId bce_with_logits(NodeId logits, NodeId labels);
    NodeId bilinear_sample(NodeId fmap, NodeId points);
    NodeId box_minmax(NodeId points);
    NodeId giou_loss(NodeId pred_box, NodeId gt_box);

    const TensorValue& value(NodeId id) const;
    const TensorValue& grad(NodeId id) const;
    bool has_grad(NodeId id) const;
    const GraphNode& node(NodeId id) const;
    std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

    /// Reverse pass from a scalar root. Returns a gradient for every
    /// parameter in the bound store; parameters not reachable from the root
    /// get zeros. Calling backward twice without recording new nodes is a
    /// contract error.
    GradientMap backward(NodeId root);

  private:
    NodeId push(GraphNode node);
    GraphNode& mut(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
    void accumulate(NodeId id, const TensorValue& contribution);
    void accumulate_flat(NodeId id, std::int64_t offset, double v);
    void dispatch_vjp(NodeId id);

    std::vector<GraphNode> nodes_;
    const ParameterStore* store_ = nullptr;
    std::map<std::string, NodeId> param_nodes_;
    bool backward_done_ = false;
    std::int64_t nodes_at_backward_ = -1;
};

} // namespace pointhead
