// Test-only reference implementations, kept independent of the engine's
// kernel and graph code paths on purpose.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "qsnn/tensor.hpp"

namespace oracles {

using qsnn::Shape;
using qsnn::Tensor;

// Direct-summation convolution, no im2col, no BLAS.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  int64_t batch = x.shape[0], in_c = x.shape[1], h = x.shape[2], width = x.shape[3];
  int64_t oc = w.shape[0], k = w.shape[2];
  int64_t oh = (h + 2 * pad - k) / stride + 1;
  int64_t ow = (width + 2 * pad - k) / stride + 1;
  Tensor out(Shape{batch, oc, oh, ow});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t o = 0; o < oc; ++o)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int64_t c = 0; c < in_c; ++c)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                int64_t iy = oy * stride - pad + ky;
                int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= width) continue;
                acc += static_cast<double>(x[((b * in_c + c) * h + iy) * width + ix]) *
                       w[((o * in_c + c) * k + ky) * k + kx];
              }
          out[((b * oc + o) * oh + oy) * ow + ox] = static_cast<float>(acc);
        }
  return out;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out(Shape{m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < k; ++t)
        acc += static_cast<double>(a[i * k + t]) * b[t * n + j];
      out[i * n + j] = static_cast<float>(acc);
    }
  return out;
}

// sum_j sign_j * s_j the obvious way.
inline long long naive_sign_dot(const std::vector<int>& signs, const std::vector<int>& spikes) {
  long long acc = 0;
  for (size_t i = 0; i < signs.size(); ++i) acc += static_cast<long long>(signs[i]) * spikes[i];
  return acc;
}

// Plain float LIF simulator for fully connected nets: direct coding, hard
// reset, non-spiking leaky readout. weights[l] is [out, in].
struct LifTrace {
  std::vector<std::vector<float>> logits_per_step;      // [T][classes]
  std::vector<std::vector<std::vector<float>>> spikes;  // [layer][T][neurons]
};

inline LifTrace reference_lif_mlp(const std::vector<Tensor>& weights, const std::vector<float>& x,
                                  int timesteps, float tau, float theta) {
  size_t layers = weights.size();
  LifTrace trace;
  trace.spikes.resize(layers - 1);
  std::vector<std::vector<float>> u(layers);
  for (size_t l = 0; l < layers; ++l) u[l].assign(static_cast<size_t>(weights[l].shape[0]), 0.f);
  for (int t = 0; t < timesteps; ++t) {
    std::vector<float> in = x;
    for (size_t l = 0; l < layers; ++l) {
      int64_t out_n = weights[l].shape[0], in_n = weights[l].shape[1];
      std::vector<float> syn(static_cast<size_t>(out_n), 0.f);
      for (int64_t o = 0; o < out_n; ++o) {
        double acc = 0.0;
        for (int64_t i = 0; i < in_n; ++i)
          acc += static_cast<double>(weights[l][o * in_n + i]) * in[static_cast<size_t>(i)];
        syn[static_cast<size_t>(o)] = static_cast<float>(acc);
      }
      bool readout = l == layers - 1;
      for (int64_t o = 0; o < out_n; ++o) {
        float& uo = u[l][static_cast<size_t>(o)];
        uo = tau * uo + syn[static_cast<size_t>(o)];
      }
      if (readout) {
        trace.logits_per_step.push_back(u[l]);
      } else {
        std::vector<float> s(static_cast<size_t>(out_n));
        for (int64_t o = 0; o < out_n; ++o) {
          float& uo = u[l][static_cast<size_t>(o)];
          s[static_cast<size_t>(o)] = uo >= theta ? 1.f : 0.f;
          if (uo >= theta) uo = 0.f;
        }
        trace.spikes[l].push_back(s);
        in = s;
      }
    }
  }
  return trace;
}

inline std::mt19937_64 rng(uint64_t seed) { return std::mt19937_64(seed); }

inline Tensor random_tensor(Shape s, uint64_t seed, float lo = -1.f, float hi = 1.f) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(s));
  for (auto& v : t.data) v = dist(gen);
  return t;
}

}  // namespace oracles
