#include "qsnn/regulation.hpp"

#include <cmath>
#include <stdexcept>

namespace qsnn::regulation {

namespace {

struct Moments {
  double mean, stddev;  // population std
};

Moments moments(const Tensor& w) {
  double mean = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) mean += w[i];
  mean /= static_cast<double>(w.numel());
  double var = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) {
    double d = w[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(w.numel());
  return {mean, std::sqrt(var)};
}

}  // namespace

Tensor standardize_weights(const Tensor& w, float eps) {
  if (w.numel() < 2)
    throw std::invalid_argument("standardize_weights: need at least 2 elements, got " +
                                std::to_string(w.numel()));
  if (eps < 0.f) throw std::invalid_argument("standardize_weights: eps must be >= 0");
  auto [mean, stddev] = moments(w);
  double denom = stddev + eps;
  if (denom == 0.0)
    throw std::invalid_argument("standardize_weights: constant tensor with eps = 0");
  Tensor out(w.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>((w[i] - mean) / denom);
  return out;
}

double bernoulli_entropy(double p) {
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("bernoulli_entropy: p must be in [0,1], got " + std::to_string(p));
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

double argmax_entropy() {
  double peak = bernoulli_entropy(0.5);
  for (int i = 1; i <= 99; ++i) {
    double p = i / 100.0;
    if (bernoulli_entropy(p) > peak)
      throw std::logic_error("argmax_entropy: grid point beats p = 0.5");
  }
  return 0.5;
}

double firing_rate(const Tensor& spikes) {
  if (spikes.numel() == 0) throw std::invalid_argument("firing_rate: empty spike record");
  double count = 0.0;
  for (int64_t i = 0; i < spikes.numel(); ++i) {
    float s = spikes[i];
    if (s != 0.f && s != 1.f)
      throw std::invalid_argument("firing_rate: spikes must be binary, got " + std::to_string(s));
    count += s;
  }
  return count / static_cast<double>(spikes.numel());
}

double spike_regulation_loss(const std::vector<double>& rates) {
  double loss = 0.0;
  for (double f : rates) {
    double d = f - 0.5;
    loss += d * d;
  }
  return loss;
}

double total_loss(const Tensor& outputs_per_step, int target, double lambda, double ls) {
  if (outputs_per_step.ndim() != 2)
    throw std::invalid_argument("total_loss: outputs must be [T, classes], got " +
                                shape_str(outputs_per_step.shape));
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
  int64_t timesteps = outputs_per_step.shape[0], classes = outputs_per_step.shape[1];
  if (timesteps < 1) throw std::invalid_argument("total_loss: need at least one time step");
  if (target < 0 || target >= classes)
    throw std::invalid_argument("total_loss: target " + std::to_string(target) +
                                " out of range for " + std::to_string(classes) + " classes");
  double ce = 0.0;
  for (int64_t t = 0; t < timesteps; ++t) {
    const float* row = outputs_per_step.data.data() + t * classes;
    double mx = row[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double denom = 0.0;
    for (int64_t c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
    ce += -(row[target] - mx - std::log(denom));
  }
  return ce / static_cast<double>(timesteps) + lambda * ls;
}

ad::NodePtr standardize_node(ad::NodePtr w, float eps) {
  Tensor out = standardize_weights(w->value, eps);
  auto [mean, stddev] = moments(w->value);
  auto y = std::make_shared<Tensor>(out);
  auto n = std::make_shared<ad::Node>(std::move(out), "standardize");
  n->parents = {w};
  double sigma = stddev;
  double denom = stddev + eps;
  n->backward = [w, y, sigma, denom](ad::Node& self) {
    // dL/dx = (g - mean(g))/denom - y * mean(g .* y) / sigma
    int64_t count = self.grad.numel();
    double gbar = 0.0, gy = 0.0;
    for (int64_t i = 0; i < count; ++i) {
      gbar += self.grad[i];
      gy += static_cast<double>(self.grad[i]) * (*y)[i];
    }
    gbar /= static_cast<double>(count);
    gy /= static_cast<double>(count);
    double yscale = sigma > 0.0 ? gy / sigma : 0.0;
    for (int64_t i = 0; i < count; ++i)
      w->grad[i] += static_cast<float>((self.grad[i] - gbar) / denom - (*y)[i] * yscale);
  };
  return n;
}

}  // namespace qsnn::regulation
