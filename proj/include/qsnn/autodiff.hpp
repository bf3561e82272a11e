#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qsnn/tensor.hpp"

namespace qsnn::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of an eagerly evaluated reverse-mode graph. `backward` pulls
/// this node's grad into its parents' grads; custom rules (surrogate spikes,
/// straight-through quantizers) are just nodes whose backward was supplied
/// at construction.
struct Node {
  Tensor value;
  Tensor grad;  // same shape as value, accumulates across fan-out
  std::string op_tag;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  Node(Tensor v, std::string tag)
      : value(std::move(v)), grad(value.shape), op_tag(std::move(tag)) {}

  bool is_leaf() const { return parents.empty(); }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.f); }
};

NodePtr leaf(Tensor value, std::string tag = "leaf");

enum class OpKind {
  Add,
  Mul,
  ScalarMul,
  MatMul,
  Conv2d,
  AvgPool2d,
  Mean,
  Sum,
  Reshape,
  Concat,
  SoftmaxCrossEntropy,
  Apply,  // elementwise with user-supplied forward/backward
};

struct OpAttrs {
  float scalar = 1.f;
  bool trans_a = false, trans_b = false;
  int stride = 1, pad = 0, kernel = 2;
  Shape shape;
  std::vector<int> labels;
  std::function<float(float)> fn;   // Apply: elementwise forward
  std::function<float(float)> dfn;  // Apply: local derivative factor at the input value
  std::string tag;
};

/// Generic dispatcher; the named constructors below are what call sites use.
NodePtr forward_op(OpKind kind, const std::vector<NodePtr>& inputs, const OpAttrs& attrs = {});

NodePtr add(NodePtr a, NodePtr b);
NodePtr mul(NodePtr a, NodePtr b);
NodePtr scalar_mul(NodePtr a, float s);
NodePtr matmul(NodePtr a, NodePtr b, bool trans_a = false, bool trans_b = false);
NodePtr conv2d(NodePtr x, NodePtr w, int stride, int pad);
NodePtr avgpool2d(NodePtr x, int k);
NodePtr mean_all(NodePtr a);
NodePtr sum_all(NodePtr a);
NodePtr reshape(NodePtr a, Shape s);
/// Stacks equal-shape inputs along a new leading axis.
NodePtr concat0(const std::vector<NodePtr>& xs);
/// Mean over the batch of -log softmax(logits)[label]; logits [B,C].
NodePtr softmax_cross_entropy(NodePtr logits, std::vector<int> labels);
/// Elementwise op with a custom backward: dL/dx = dL/dy * dfn(x).
NodePtr elementwise(NodePtr x, std::function<float(float)> fn, std::function<float(float)> dfn,
                    std::string tag);
/// Multiply by a constant tensor (no gradient into the gate).
NodePtr mul_const(NodePtr x, Tensor gate, std::string tag = "mul-const");
/// Per-channel scale along dim 1 by a constant vector (alpha treated as constant).
NodePtr scale_channels(NodePtr x, Tensor alpha);

/// Deterministic topological order ending at out.
std::vector<Node*> topo_order(Node* out);

/// Accumulates seed into out.grad and propagates to every reachable node.
void backpropagate(const NodePtr& out, const Tensor& seed);
void zero_grads_reachable(const NodePtr& out);

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|)
/// for a scalar-valued graph builder evaluated at `point`.
double finite_difference_check(const std::function<NodePtr(NodePtr)>& f, const Tensor& point,
                               double eps);

}  // namespace qsnn::ad
