#include "qsnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "qsnn/kernels.hpp"

namespace qsnn::ad {

NodePtr leaf(Tensor value, std::string tag) {
  return std::make_shared<Node>(std::move(value), std::move(tag));
}

NodePtr add(NodePtr a, NodePtr b) {
  check_same_shape("add", a->value, b->value);
  Tensor out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  auto n = std::make_shared<Node>(std::move(out), "add");
  n->parents = {a, b};
  n->backward = [a, b](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      a->grad[i] += self.grad[i];
      b->grad[i] += self.grad[i];
    }
  };
  return n;
}

NodePtr mul(NodePtr a, NodePtr b) {
  check_same_shape("mul", a->value, b->value);
  Tensor out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
  auto n = std::make_shared<Node>(std::move(out), "mul");
  n->parents = {a, b};
  n->backward = [a, b](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      a->grad[i] += self.grad[i] * b->value[i];
      b->grad[i] += self.grad[i] * a->value[i];
    }
  };
  return n;
}

NodePtr scalar_mul(NodePtr a, float s) {
  Tensor out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * s;
  auto n = std::make_shared<Node>(std::move(out), "scalar-mul");
  n->parents = {a};
  n->backward = [a, s](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) a->grad[i] += self.grad[i] * s;
  };
  return n;
}

NodePtr matmul(NodePtr a, NodePtr b, bool trans_a, bool trans_b) {
  if (trans_a) throw std::invalid_argument("matmul: trans_a unsupported");
  Tensor out = kernels::matmul_forward(a->value, b->value, trans_a, trans_b);
  auto n = std::make_shared<Node>(std::move(out), "matmul");
  n->parents = {a, b};
  n->backward = [a, b, trans_b](Node& self) {
    const Tensor& dout = self.grad;
    int64_t m = dout.shape[0], nn = dout.shape[1];
    if (!trans_b) {
      // C = A[m,k] B[k,n]: dA += dC B^T, dB += A^T dC
      int64_t k = a->value.shape[1];
      kernels::sgemm(false, true, m, k, nn, 1.f, dout.data.data(), nn, b->value.data.data(), nn,
                     1.f, a->grad.data.data(), k);
      kernels::sgemm(true, false, k, nn, m, 1.f, a->value.data.data(), k, dout.data.data(), nn,
                     1.f, b->grad.data.data(), nn);
    } else {
      // C = A[m,k] B[n,k]^T: dA += dC B, dB += dC^T A
      int64_t k = a->value.shape[1];
      kernels::sgemm(false, false, m, k, nn, 1.f, dout.data.data(), nn, b->value.data.data(), k,
                     1.f, a->grad.data.data(), k);
      kernels::sgemm(true, false, nn, k, m, 1.f, dout.data.data(), nn, a->value.data.data(), k,
                     1.f, b->grad.data.data(), k);
    }
  };
  return n;
}

NodePtr conv2d(NodePtr x, NodePtr w, int stride, int pad) {
  Tensor out = kernels::conv2d_forward(x->value, w->value, stride, pad);
  auto n = std::make_shared<Node>(std::move(out), "conv2d");
  n->parents = {x, w};
  n->backward = [x, w, stride, pad](Node& self) {
    kernels::conv2d_backward(x->value, w->value, stride, pad, self.grad, &x->grad, &w->grad);
  };
  return n;
}

NodePtr avgpool2d(NodePtr x, int k) {
  Tensor out = kernels::avgpool2d_forward(x->value, k);
  auto n = std::make_shared<Node>(std::move(out), "avgpool2d");
  n->parents = {x};
  n->backward = [x, k](Node& self) {
    kernels::avgpool2d_backward(self.grad, x->value.shape, k, x->grad);
  };
  return n;
}

NodePtr mean_all(NodePtr a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
  int64_t count = a->value.numel();
  if (count == 0) throw std::invalid_argument("mean: empty tensor");
  auto n = std::make_shared<Node>(Tensor::scalar(static_cast<float>(acc / count)), "mean");
  n->parents = {a};
  n->backward = [a, count](Node& self) {
    float g = self.grad[0] / static_cast<float>(count);
    for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
  };
  return n;
}

NodePtr sum_all(NodePtr a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
  auto n = std::make_shared<Node>(Tensor::scalar(static_cast<float>(acc)), "sum");
  n->parents = {a};
  n->backward = [a](Node& self) {
    float g = self.grad[0];
    for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
  };
  return n;
}

NodePtr reshape(NodePtr a, Shape s) {
  if (shape_numel(s) != a->value.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a->value.shape) + " as " +
                                shape_str(s));
  Tensor out(std::move(s), a->value.data);
  auto n = std::make_shared<Node>(std::move(out), "reshape");
  n->parents = {a};
  n->backward = [a](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) a->grad[i] += self.grad[i];
  };
  return n;
}

NodePtr concat0(const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  for (const auto& x : xs) check_same_shape("concat", xs[0]->value, x->value);
  int64_t chunk = xs[0]->value.numel();
  Shape out_shape;
  out_shape.push_back(static_cast<int64_t>(xs.size()));
  for (int64_t d : xs[0]->value.shape) out_shape.push_back(d);
  Tensor out(out_shape);
  for (size_t i = 0; i < xs.size(); ++i)
    std::copy(xs[i]->value.data.begin(), xs[i]->value.data.end(),
              out.data.begin() + static_cast<int64_t>(i) * chunk);
  auto n = std::make_shared<Node>(std::move(out), "concat");
  n->parents = xs;
  n->backward = [xs, chunk](Node& self) {
    for (size_t i = 0; i < xs.size(); ++i)
      for (int64_t j = 0; j < chunk; ++j)
        xs[i]->grad[j] += self.grad[static_cast<int64_t>(i) * chunk + j];
  };
  return n;
}

NodePtr softmax_cross_entropy(NodePtr logits, std::vector<int> labels) {
  const Tensor& z = logits->value;
  if (z.ndim() != 2)
    throw std::invalid_argument("softmax-cross-entropy: logits must be 2-d, got " +
                                shape_str(z.shape));
  int64_t batch = z.shape[0], classes = z.shape[1];
  if (static_cast<int64_t>(labels.size()) != batch)
    throw std::invalid_argument("softmax-cross-entropy: batch " + std::to_string(batch) +
                                " vs labels " + std::to_string(labels.size()));
  auto probs = std::make_shared<Tensor>(Shape{batch, classes});
  double loss = 0.0;
  for (int64_t b = 0; b < batch; ++b) {
    int y = labels[static_cast<size_t>(b)];
    if (y < 0 || y >= classes)
      throw std::invalid_argument("softmax-cross-entropy: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(classes) + " classes");
    const float* row = z.data.data() + b * classes;
    float mx = row[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int64_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    double log_denom = std::log(denom);
    for (int64_t c = 0; c < classes; ++c)
      (*probs)[b * classes + c] =
          static_cast<float>(std::exp(static_cast<double>(row[c] - mx)) / denom);
    loss += -(static_cast<double>(row[y] - mx) - log_denom);
  }
  loss /= static_cast<double>(batch);
  auto n = std::make_shared<Node>(Tensor::scalar(static_cast<float>(loss)), "softmax-cross-entropy");
  n->parents = {logits};
  n->backward = [logits, probs, labels, batch, classes](Node& self) {
    float g = self.grad[0] / static_cast<float>(batch);
    for (int64_t b = 0; b < batch; ++b) {
      int y = labels[static_cast<size_t>(b)];
      for (int64_t c = 0; c < classes; ++c) {
        float p = (*probs)[b * classes + c];
        logits->grad[b * classes + c] += g * (p - (c == y ? 1.f : 0.f));
      }
    }
  };
  return n;
}

NodePtr elementwise(NodePtr x, std::function<float(float)> fn, std::function<float(float)> dfn,
                    std::string tag) {
  if (!fn || !dfn) throw std::invalid_argument("apply: missing forward or backward rule");
  Tensor out(x->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = fn(x->value[i]);
  auto n = std::make_shared<Node>(std::move(out), std::move(tag));
  n->parents = {x};
  n->backward = [x, dfn](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) x->grad[i] += self.grad[i] * dfn(x->value[i]);
  };
  return n;
}

NodePtr mul_const(NodePtr x, Tensor gate, std::string tag) {
  check_same_shape(tag.c_str(), x->value, gate);
  Tensor out(x->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * gate[i];
  auto n = std::make_shared<Node>(std::move(out), std::move(tag));
  n->parents = {x};
  auto g = std::make_shared<Tensor>(std::move(gate));
  n->backward = [x, g](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) x->grad[i] += self.grad[i] * (*g)[i];
  };
  return n;
}

NodePtr scale_channels(NodePtr x, Tensor alpha) {
  const Tensor& v = x->value;
  if (v.ndim() < 2)
    throw std::invalid_argument("scale-channels: need at least 2 dims, got " + shape_str(v.shape));
  if (alpha.ndim() != 1 || alpha.shape[0] != v.shape[1])
    throw std::invalid_argument("scale-channels: alpha " + shape_str(alpha.shape) +
                                " does not match channels of " + shape_str(v.shape));
  int64_t channels = v.shape[1];
  int64_t inner = 1;
  for (size_t i = 2; i < v.ndim(); ++i) inner *= v.shape[i];
  int64_t outer = v.shape[0];
  Tensor out(v.shape);
  for (int64_t b = 0; b < outer; ++b)
    for (int64_t c = 0; c < channels; ++c) {
      float s = alpha[c];
      const float* src = v.data.data() + (b * channels + c) * inner;
      float* dst = out.data.data() + (b * channels + c) * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] = src[i] * s;
    }
  auto n = std::make_shared<Node>(std::move(out), "scale-channels");
  n->parents = {x};
  auto a = std::make_shared<Tensor>(std::move(alpha));
  n->backward = [x, a, outer, channels, inner](Node& self) {
    for (int64_t b = 0; b < outer; ++b)
      for (int64_t c = 0; c < channels; ++c) {
        float s = (*a)[c];
        const float* src = self.grad.data.data() + (b * channels + c) * inner;
        float* dst = x->grad.data.data() + (b * channels + c) * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * s;
      }
  };
  return n;
}

NodePtr forward_op(OpKind kind, const std::vector<NodePtr>& inputs, const OpAttrs& attrs) {
  auto want = [&](size_t n, const char* name) {
    if (inputs.size() != n)
      throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(inputs.size()));
  };
  switch (kind) {
    case OpKind::Add: want(2, "add"); return add(inputs[0], inputs[1]);
    case OpKind::Mul: want(2, "mul"); return mul(inputs[0], inputs[1]);
    case OpKind::ScalarMul: want(1, "scalar-mul"); return scalar_mul(inputs[0], attrs.scalar);
    case OpKind::MatMul:
      want(2, "matmul");
      return matmul(inputs[0], inputs[1], attrs.trans_a, attrs.trans_b);
    case OpKind::Conv2d:
      want(2, "conv2d");
      return conv2d(inputs[0], inputs[1], attrs.stride, attrs.pad);
    case OpKind::AvgPool2d: want(1, "avgpool2d"); return avgpool2d(inputs[0], attrs.kernel);
    case OpKind::Mean: want(1, "mean"); return mean_all(inputs[0]);
    case OpKind::Sum: want(1, "sum"); return sum_all(inputs[0]);
    case OpKind::Reshape: want(1, "reshape"); return reshape(inputs[0], attrs.shape);
    case OpKind::Concat: return concat0(inputs);
    case OpKind::SoftmaxCrossEntropy:
      want(1, "softmax-cross-entropy");
      return softmax_cross_entropy(inputs[0], attrs.labels);
    case OpKind::Apply:
      want(1, "apply");
      return elementwise(inputs[0], attrs.fn, attrs.dfn,
                         attrs.tag.empty() ? "apply" : attrs.tag);
  }
  throw std::invalid_argument("forward_op: unknown op kind");
}

std::vector<Node*> topo_order(Node* out) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative DFS; children pushed in declared parent order for determinism.
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(out, 0);
  seen.insert(out);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children; reverse for backprop
}

void backpropagate(const NodePtr& out, const Tensor& seed) {
  if (!out) throw std::invalid_argument("backpropagate: null output");
  if (seed.shape != out->value.shape)
    throw std::invalid_argument("backpropagate: seed shape " + shape_str(seed.shape) +
                                " does not match output " + shape_str(out->value.shape));
  for (int64_t i = 0; i < seed.numel(); ++i) out->grad[i] += seed[i];
  auto order = topo_order(out.get());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

void zero_grads_reachable(const NodePtr& out) {
  for (Node* n : topo_order(out.get())) n->zero_grad();
}

double finite_difference_check(const std::function<NodePtr(NodePtr)>& f, const Tensor& point,
                               double eps) {
  if (eps <= 0) throw std::invalid_argument("finite_difference_check: eps must be > 0");
  NodePtr x = leaf(point, "fd-point");
  NodePtr y = f(x);
  if (y->value.numel() != 1)
    throw std::invalid_argument("finite_difference_check: builder must produce a scalar");
  backpropagate(y, Tensor::scalar(1.f));
  double max_err = 0.0;
  for (int64_t i = 0; i < point.numel(); ++i) {
    Tensor plus = point, minus = point;
    plus[i] += static_cast<float>(eps);
    minus[i] -= static_cast<float>(eps);
    double fp = static_cast<double>(f(leaf(plus, "fd"))->value[0]);
    double fm = static_cast<double>(f(leaf(minus, "fd"))->value[0]);
    double fd = (fp - fm) / (2.0 * eps);
    double analytic = static_cast<double>(x->grad[i]);
    if (!std::isfinite(fd) || !std::isfinite(analytic))
      throw std::runtime_error("finite_difference_check: non-finite value at coordinate " +
                               std::to_string(i));
    double err = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace qsnn::ad
