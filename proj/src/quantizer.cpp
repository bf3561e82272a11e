#include "qsnn/quantizer.hpp"

namespace qsnn::quantizer {

namespace {

void check_membrane_bits(int k) {
  if (k != 2 && k != 4 && k != 8)
    throw std::invalid_argument("quantize_membrane: k must be one of {2,4,8}, got " +
                                std::to_string(k));
}

float max_abs(const Tensor& w) {
  float m = 0.f;
  for (int64_t i = 0; i < w.numel(); ++i) m = std::max(m, std::fabs(w[i]));
  return m;
}

}  // namespace

Tensor sign_binarize(const Tensor& w) {
  Tensor out(w.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = w[i] >= 0.f ? 1.f : -1.f;
  return out;
}

Tensor channel_scale(const Tensor& w) {
  if (w.ndim() != 2)
    throw std::invalid_argument("channel_scale: expected [out_channels, fan_in], got " +
                                shape_str(w.shape));
  int64_t channels = w.shape[0], fan_in = w.shape[1];
  if (fan_in < 1) throw std::invalid_argument("channel_scale: empty channel");
  Tensor alpha(Shape{channels});
  for (int64_t c = 0; c < channels; ++c) {
    float acc = 0.f;
    const float* row = w.data.data() + c * fan_in;
    for (int64_t j = 0; j < fan_in; ++j) acc += std::fabs(row[j]);
    alpha[c] = acc / static_cast<float>(fan_in);
  }
  return alpha;
}

float layer_scale(const Tensor& u) {
  if (u.numel() == 0) throw std::invalid_argument("layer_scale: empty tensor");
  float m = u[0];
  for (int64_t i = 1; i < u.numel(); ++i) m = std::max(m, u[i]);
  return m > 0.f ? m : 1.f;
}

Tensor quantize_membrane(const Tensor& u, int k, float alpha_u) {
  check_membrane_bits(k);
  if (!(alpha_u > 0.f))
    throw std::invalid_argument("quantize_membrane: alpha_u must be > 0, got " +
                                std::to_string(alpha_u));
  Tensor out(u.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = quantize_membrane_scalar(u[i], alpha_u, k);
  return out;
}

Tensor quantize_weight_kbit(const Tensor& w, int bits) {
  if (bits != 8)
    throw std::invalid_argument("quantize_weight_kbit: bits must be 8, got " +
                                std::to_string(bits));
  float alpha = max_abs(w);
  if (alpha == 0.f) return Tensor(w.shape);
  Tensor out(w.shape);
  float levels = static_cast<float>((1 << (bits - 1)) - 1);
  float scale = alpha / levels;
  for (int64_t i = 0; i < out.numel(); ++i) {
    float x = std::min(std::max(w[i] / alpha, -1.f), 1.f);
    out[i] = scale * round_half_away(levels * x);
  }
  return out;
}

ad::NodePtr sign_binarize_node(ad::NodePtr w) {
  Tensor out = sign_binarize(w->value);
  auto n = std::make_shared<ad::Node>(std::move(out), "sign");
  n->parents = {w};
  n->backward = [w](ad::Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      if (std::fabs(w->value[i]) <= 1.f) w->grad[i] += self.grad[i];
  };
  return n;
}

ad::NodePtr quantize_membrane_node(ad::NodePtr u, int k, float alpha_u) {
  Tensor out = quantize_membrane(u->value, k, alpha_u);
  auto n = std::make_shared<ad::Node>(std::move(out), "quantize-membrane");
  n->parents = {u};
  n->backward = [u, alpha_u](ad::Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      float x = u->value[i] / alpha_u;
      if (x > -1.f && x < 1.f) u->grad[i] += self.grad[i];
    }
  };
  return n;
}

ad::NodePtr quantize_weight_kbit_node(ad::NodePtr w, int bits) {
  Tensor out = quantize_weight_kbit(w->value, bits);
  auto n = std::make_shared<ad::Node>(std::move(out), "quantize-weight");
  n->parents = {w};
  n->backward = [w](ad::Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) w->grad[i] += self.grad[i];
  };
  return n;
}

}  // namespace qsnn::quantizer
