#pragma once

#include <cmath>
#include <stdexcept>

#include "qsnn/autodiff.hpp"
#include "qsnn/tensor.hpp"

namespace qsnn::quantizer {

/// Bit-width configuration. 32 bits means the corresponding quantizer is the
/// identity (full-precision path).
struct QuantSpec {
  int hidden_weight_bits = 1;
  int boundary_weight_bits = 8;
  int membrane_bits = 8;

  bool weights_binarized() const { return hidden_weight_bits == 1; }
  bool membrane_quantized() const { return membrane_bits != 32; }

  void validate() const {
    if (hidden_weight_bits != 1 && hidden_weight_bits != 32)
      throw std::invalid_argument("QuantSpec: hidden_weight_bits must be 1 or 32, got " +
                                  std::to_string(hidden_weight_bits));
    if (boundary_weight_bits != 8 && boundary_weight_bits != 32)
      throw std::invalid_argument("QuantSpec: boundary_weight_bits must be 8 or 32, got " +
                                  std::to_string(boundary_weight_bits));
    if (membrane_bits != 2 && membrane_bits != 4 && membrane_bits != 8 && membrane_bits != 32)
      throw std::invalid_argument("QuantSpec: membrane_bits must be one of {2,4,8,32}, got " +
                                  std::to_string(membrane_bits));
  }
};

/// Binarized weights: signs plus the per-output-channel scale restoring magnitude.
struct ScaledSign {
  Tensor signs;    // values in {-1,+1}, same shape as the weights
  Tensor alpha_w;  // [out_channels]
};

// Round half away from zero, fixed across platforms.
inline float round_half_away(float x) { return std::round(x); }

inline float membrane_grid_scale(float alpha_u, int k) {
  return alpha_u / static_cast<float>((1 << (k - 1)) - 1);
}

// Shared by the float path and the packed integer path; see bitkernel.
inline float quantize_membrane_scalar(float u, float alpha_u, int k) {
  float levels = static_cast<float>((1 << (k - 1)) - 1);
  float x = u / alpha_u;
  x = std::min(std::max(x, -1.f), 1.f);
  return membrane_grid_scale(alpha_u, k) * round_half_away(levels * x);
}

Tensor sign_binarize(const Tensor& w);
/// alpha_w[c] = mean |w[c, :]| for w shaped [out_channels, fan_in].
Tensor channel_scale(const Tensor& w);
/// Layer-wise scale: max(u), falling back to 1.0 when max(u) <= 0.
float layer_scale(const Tensor& u);
Tensor quantize_membrane(const Tensor& u, int k, float alpha_u);
/// Symmetric uniform weight quantizer with per-tensor alpha = max|w|.
Tensor quantize_weight_kbit(const Tensor& w, int bits);

// Autodiff nodes carrying the straight-through rules.
// sign: gradient passes where |w| <= 1, zero outside.
ad::NodePtr sign_binarize_node(ad::NodePtr w);
// membrane quantizer: round is identity, clip gates the open interval (-1,1).
ad::NodePtr quantize_membrane_node(ad::NodePtr u, int k, float alpha_u);
// k-bit weights: identity straight-through (clip never binds at alpha = max|w|).
ad::NodePtr quantize_weight_kbit_node(ad::NodePtr w, int bits);

}  // namespace qsnn::quantizer
