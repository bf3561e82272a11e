#pragma once

#include <vector>

#include "qsnn/autodiff.hpp"
#include "qsnn/tensor.hpp"

namespace qsnn::regulation {

/// Per-layer distribution diagnostics: sign/spike probabilities and their
/// Bernoulli entropies in nats.
struct EntropyReport {
  double p_w = 0.0;
  double p_s = 0.0;
  double entropy_w_nats = 0.0;
  double entropy_s_nats = 0.0;
};

/// (W - mean) / (population std + eps) over the whole tensor.
Tensor standardize_weights(const Tensor& w, float eps);

/// -[p ln p + (1-p) ln(1-p)], with H(0) = H(1) = 0.
double bernoulli_entropy(double p);

/// Returns 0.5 after checking it dominates a dense probability grid.
double argmax_entropy();

/// Fraction of set entries of a binary tensor.
double firing_rate(const Tensor& spikes);

/// Sum over hidden layers of (f_l - 0.5)^2.
double spike_regulation_loss(const std::vector<double>& rates);

/// (1/T) sum_t crossentropy(softmax(o[t]), target) + lambda * ls
/// for a single sample's outputs_per_step [T, classes].
double total_loss(const Tensor& outputs_per_step, int target, double lambda, double ls);

/// Standardization with the full gradient through mean and std.
ad::NodePtr standardize_node(ad::NodePtr w, float eps);

}  // namespace qsnn::regulation
