#pragma once

#include <cmath>
#include <stdexcept>

#include "qsnn/autodiff.hpp"
#include "qsnn/tensor.hpp"

namespace qsnn::neuron {

struct LifParams {
  float tau = 0.5f;    // leak factor, (0, 1]
  float theta = 1.0f;  // firing threshold, > 0
  float beta = 1.0f;   // surrogate half-width, > 0

  void validate() const {
    if (!(tau > 0.f && tau <= 1.f))
      throw std::invalid_argument("LifParams: tau must be in (0,1], got " + std::to_string(tau));
    if (!(theta > 0.f))
      throw std::invalid_argument("LifParams: theta must be > 0, got " + std::to_string(theta));
    if (!(beta > 0.f))
      throw std::invalid_argument("LifParams: beta must be > 0, got " + std::to_string(beta));
  }
};

/// Per-layer simulation state over a window: membrane after the last step and
/// the emitted spikes laid out [N, T].
struct LifState {
  Tensor membrane;
  Tensor spikes;  // values in {0,1}
};

// Scalar steps shared by the training path and the packed inference path.
// Both must round identically, so the arithmetic lives here.
inline float lif_update_scalar(float tau, float prev, float syn) { return tau * prev + syn; }
inline float fire_scalar(float membrane, float theta) { return membrane >= theta ? 1.f : 0.f; }
inline float surrogate_scalar(float membrane, float theta, float beta) {
  return std::max(0.f, beta - std::fabs(membrane - theta));
}

Tensor lif_integrate(const Tensor& prev_membrane, const Tensor& synaptic_input,
                     const LifParams& params);
Tensor fire(const Tensor& membrane, const LifParams& params);
Tensor hard_reset(const Tensor& membrane, const Tensor& spikes);
Tensor surrogate_grad(const Tensor& membrane, const LifParams& params);

/// Spike generation node: Heaviside forward, triangular surrogate backward.
ad::NodePtr fire_node(ad::NodePtr membrane, const LifParams& params);
/// Reset node: membrane * (1 - s) with the spike gate held constant.
ad::NodePtr hard_reset_node(ad::NodePtr membrane, const Tensor& spike_values);

}  // namespace qsnn::neuron
