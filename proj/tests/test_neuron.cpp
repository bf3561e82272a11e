#include <doctest.h>

#include "oracles.hpp"
#include "qsnn/neuron.hpp"

using namespace qsnn;
using namespace qsnn::neuron;

TEST_CASE("lif_integrate applies the leaky update") {
  LifParams p;
  p.tau = 0.5f;
  Tensor prev({1}, {0.8f}), in({1}, {0.7f});
  CHECK(lif_integrate(prev, in, p)[0] == doctest::Approx(1.1f));
  CHECK(lif_integrate(Tensor({1}, {0.f}), Tensor({1}, {0.4f}), p)[0] == 0.4f);
  LifParams ident;
  ident.tau = 1.f;
  Tensor x({3}, {0.3f, -0.2f, 5.f});
  Tensor zero({3}, 0.f);
  Tensor out = lif_integrate(x, zero, ident);
  for (int i = 0; i < 3; ++i) CHECK(out[i] == x[i]);
  CHECK_THROWS_AS(lif_integrate(Tensor({2}), Tensor({3}), p), std::invalid_argument);
}

TEST_CASE("fire thresholds inclusively at theta") {
  LifParams p;  // theta = 1
  CHECK(fire(Tensor({1}, {1.1f}), p)[0] == 1.f);
  CHECK(fire(Tensor({1}, {1.0f}), p)[0] == 1.f);  // u >= theta fires
  CHECK(fire(Tensor({1}, {0.4f}), p)[0] == 0.f);
}

TEST_CASE("hard_reset zeroes fired neurons and leaves the rest") {
  CHECK(hard_reset(Tensor({1}, {1.1f}), Tensor({1}, {1.f}))[0] == 0.f);
  CHECK(hard_reset(Tensor({1}, {0.4f}), Tensor({1}, {0.f}))[0] == 0.4f);
  Tensor out = hard_reset(Tensor({2}, {1.2f, 0.3f}), Tensor({2}, {1.f, 0.f}));
  CHECK(out[0] == 0.f);
  CHECK(out[1] == 0.3f);
  CHECK_THROWS_AS(hard_reset(Tensor({1}, {1.f}), Tensor({1}, {0.5f})), std::invalid_argument);
}

TEST_CASE("surrogate_grad is the triangular kernel") {
  LifParams p;  // beta = 1, theta = 1
  CHECK(surrogate_grad(Tensor({1}, {1.0f}), p)[0] == 1.0f);
  CHECK(surrogate_grad(Tensor({1}, {2.0f}), p)[0] == 0.0f);
  CHECK(surrogate_grad(Tensor({1}, {1.5f}), p)[0] == 0.5f);
}

TEST_CASE("surrogate properties: support, symmetry, piecewise linearity") {
  LifParams p;
  p.theta = 1.f;
  p.beta = 0.75f;
  for (float d : {0.f, 0.1f, 0.3f, 0.6f, 0.74f, 0.76f, 1.f, 3.f}) {
    float lo = surrogate_grad(Tensor({1}, {p.theta - d}), p)[0];
    float hi = surrogate_grad(Tensor({1}, {p.theta + d}), p)[0];
    CHECK(lo == doctest::Approx(hi).epsilon(1e-6));  // symmetric about theta
    CHECK(lo >= 0.f);
    if (d >= p.beta) CHECK(lo == 0.f);
    if (d < p.beta) CHECK(lo == doctest::Approx(p.beta - d));  // linear ramp
  }
}

TEST_CASE("fire is binary and idempotent on theta-scaled binary input") {
  LifParams p;
  Tensor u = oracles::random_tensor({64}, 7, -2.f, 3.f);
  Tensor s = fire(u, p);
  for (int64_t i = 0; i < s.numel(); ++i) CHECK((s[i] == 0.f || s[i] == 1.f));
  Tensor scaled(s.shape);
  for (int64_t i = 0; i < s.numel(); ++i) scaled[i] = s[i] * p.theta;
  Tensor s2 = fire(scaled, p);
  for (int64_t i = 0; i < s.numel(); ++i) CHECK(s2[i] == s[i]);
}

TEST_CASE("one quiescent LIF step stays quiescent") {
  LifParams p;
  Tensor zero({8}, 0.f);
  Tensor u = lif_integrate(zero, zero, p);
  Tensor s = fire(u, p);
  Tensor reset = hard_reset(u, s);
  for (int i = 0; i < 8; ++i) {
    CHECK(s[i] == 0.f);
    CHECK(reset[i] == 0.f);
  }
}

TEST_CASE("LifParams validation") {
  LifParams p;
  p.tau = 0.f;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LifParams{};
  p.tau = 1.5f;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LifParams{};
  p.theta = 0.f;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LifParams{};
  p.beta = -1.f;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("fire_node backward equals the surrogate formula exactly") {
  LifParams p;
  p.beta = 0.9f;
  Tensor u(Shape{1000});
  for (int i = 0; i < 1000; ++i) u[i] = -1.f + 4.f * static_cast<float>(i) / 999.f;
  auto un = ad::leaf(u);
  auto s = fire_node(un, p);
  ad::backpropagate(s, Tensor::full({1000}, 1.f));
  Tensor want = surrogate_grad(u, p);
  for (int i = 0; i < 1000; ++i) CHECK(un->grad[i] == want[i]);
}

TEST_CASE("hard_reset_node gates the gradient by (1 - s) and nothing else") {
  Tensor u({4}, {1.5f, 0.3f, 2.0f, 0.9f});
  Tensor s({4}, {1.f, 0.f, 1.f, 0.f});
  auto un = ad::leaf(u);
  auto r = hard_reset_node(un, s);
  CHECK(r->value[0] == 0.f);
  CHECK(r->value[1] == 0.3f);
  ad::backpropagate(r, Tensor::full({4}, 2.f));
  CHECK(un->grad[0] == 0.f);  // spiked: gate closed
  CHECK(un->grad[1] == 2.f);
  CHECK(un->grad[2] == 0.f);
  CHECK(un->grad[3] == 2.f);
}
