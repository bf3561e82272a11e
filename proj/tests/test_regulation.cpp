#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "qsnn/quantizer.hpp"
#include "qsnn/regulation.hpp"

using namespace qsnn;
using namespace qsnn::regulation;

TEST_CASE("standardize_weights: hand values and degenerate cases") {
  Tensor out = standardize_weights(Tensor({3}, {1.f, 2.f, 3.f}), 0.f);
  CHECK(out[0] == doctest::Approx(-1.224745).epsilon(1e-4));
  CHECK(out[1] == doctest::Approx(0.0).scale(1));
  CHECK(out[2] == doctest::Approx(1.224745).epsilon(1e-4));

  Tensor constant = Tensor::full({5}, 3.f);
  Tensor z = standardize_weights(constant, 1e-5f);
  for (int i = 0; i < 5; ++i) CHECK(z[i] == 0.f);
  CHECK_THROWS_AS(standardize_weights(constant, 0.f), std::invalid_argument);
  CHECK_THROWS_AS(standardize_weights(Tensor({1}, {1.f}), 0.f), std::invalid_argument);
}

TEST_CASE("standardize_weights: output moments and idempotence") {
  Tensor w = oracles::random_tensor({400}, 3, -2.f, 5.f);
  Tensor s = standardize_weights(w, 0.f);
  double mean = 0, var = 0;
  for (int64_t i = 0; i < s.numel(); ++i) mean += s[i];
  mean /= s.numel();
  for (int64_t i = 0; i < s.numel(); ++i) var += (s[i] - mean) * (s[i] - mean);
  var /= s.numel();
  CHECK(std::fabs(mean) < 1e-5);
  CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-4);
  Tensor s2 = standardize_weights(s, 0.f);
  for (int64_t i = 0; i < s.numel(); ++i) CHECK(s2[i] == doctest::Approx(s[i]).epsilon(1e-5));
}

TEST_CASE("bernoulli_entropy: closed-form points and endpoint convention") {
  CHECK(bernoulli_entropy(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(bernoulli_entropy(0.0) == 0.0);
  CHECK(bernoulli_entropy(1.0) == 0.0);
  CHECK(bernoulli_entropy(0.2) == doctest::Approx(0.500402).epsilon(1e-5));
  CHECK_THROWS_AS(bernoulli_entropy(-0.01), std::invalid_argument);
  CHECK_THROWS_AS(bernoulli_entropy(1.01), std::invalid_argument);
}

TEST_CASE("bernoulli_entropy is concave on sampled pairs") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> dist(0.001, 0.999);
  for (int i = 0; i < 200; ++i) {
    double p = dist(gen), q = dist(gen);
    CHECK(bernoulli_entropy((p + q) / 2) >= (bernoulli_entropy(p) + bernoulli_entropy(q)) / 2 - 1e-12);
  }
}

TEST_CASE("argmax_entropy: executable witness at one half") {
  CHECK(argmax_entropy() == 0.5);
  for (int i = 1; i <= 99; ++i)
    CHECK(bernoulli_entropy(i / 100.0) <= bernoulli_entropy(0.5));
  CHECK(bernoulli_entropy(0.5) - bernoulli_entropy(0.49) > 0.0);
}

TEST_CASE("firing_rate counts set slots") {
  CHECK(firing_rate(Tensor({2, 2}, 1.f)) == 1.0);
  CHECK(firing_rate(Tensor({4, 2}, {1.f, 0.f, 0.f, 0.f, 1.f, 0.f, 1.f, 0.f})) == 0.375);
  CHECK(firing_rate(Tensor({3, 3}, 0.f)) == 0.0);
  CHECK_THROWS_AS(firing_rate(Tensor(Shape{0})), std::invalid_argument);
  CHECK_THROWS_AS(firing_rate(Tensor({2}, {0.5f, 1.f})), std::invalid_argument);
}

TEST_CASE("spike_regulation_loss pulls rates toward one half") {
  CHECK(spike_regulation_loss({0.5, 0.5}) == 0.0);
  CHECK(spike_regulation_loss({0.3, 0.7}) == doctest::Approx(0.08).epsilon(1e-12));
  CHECK(spike_regulation_loss({0.0}) == doctest::Approx(0.25).epsilon(1e-12));
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> rates{dist(gen), dist(gen), dist(gen)};
    double l = spike_regulation_loss(rates);
    CHECK(l >= 0.0);
    bool all_half = rates[0] == 0.5 && rates[1] == 0.5 && rates[2] == 0.5;
    if (!all_half) CHECK(l > 0.0);
  }
}

TEST_CASE("d spike_regulation_loss / d rate = 2(f - 0.5)") {
  const double h = 1e-6;
  for (double f : {0.1, 0.37, 0.5, 0.81}) {
    double fd = (spike_regulation_loss({f + h}) - spike_regulation_loss({f - h})) / (2 * h);
    CHECK(fd == doctest::Approx(2 * (f - 0.5)).epsilon(1e-4));
  }
}

TEST_CASE("total_loss: closed forms") {
  // uniform logits: CE = ln(C)
  Tensor uniform({2, 4}, 0.3f);
  CHECK(total_loss(uniform, 1, 0.0, 123.0) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  CHECK(total_loss(uniform, 1, 2.0, 0.125) ==
        doctest::Approx(std::log(4.0) + 2.0 * 0.125).epsilon(1e-6));
  // T = 1 reduces to a single-step CE
  Tensor one({1, 3}, {0.2f, 1.7f, -0.4f});
  double ce1 = total_loss(one, 2, 0.0, 0.0);
  double mx = 1.7;
  double denom = std::exp(0.2 - mx) + std::exp(1.7 - mx) + std::exp(-0.4 - mx);
  CHECK(ce1 == doctest::Approx(-(-0.4 - mx - std::log(denom))).epsilon(1e-6));
  CHECK_THROWS_AS(total_loss(one, 3, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(total_loss(one, -1, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(total_loss(one, 0, -0.5, 0.0), std::invalid_argument);
}

TEST_CASE("total_loss is exactly linear in lambda with slope ls") {
  Tensor o = oracles::random_tensor({3, 5}, 12);
  double ls = 0.0421875;  // exactly representable
  double l0 = total_loss(o, 2, 1.0, ls);
  double l1 = total_loss(o, 2, 2.0, ls);
  CHECK(l1 - l0 == doctest::Approx(ls).epsilon(1e-12));
}

TEST_CASE("standardize_node backward matches finite differences") {
  Tensor point = oracles::random_tensor({24}, 19, -1.f, 2.f);
  auto f = [](ad::NodePtr p) {
    auto s = regulation::standardize_node(p, 1e-5f);
    return ad::sum_all(ad::mul(s, s));
  };
  CHECK(ad::finite_difference_check(f, point, 1e-3) < 1e-3);
  // with a non-trivial head mixing coordinates
  Tensor mixw = oracles::random_tensor({24}, 23);
  auto g = [&](ad::NodePtr p) {
    auto s = regulation::standardize_node(p, 0.f);
    return ad::sum_all(ad::mul(s, ad::leaf(mixw)));
  };
  CHECK(ad::finite_difference_check(g, point, 1e-3) < 1e-3);
}

TEST_CASE("standardize then binarize splits signs near evenly for any Gaussian") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 4; ++trial) {
    std::uniform_real_distribution<float> mu_dist(-5.f, 5.f);
    std::uniform_real_distribution<float> sigma_dist(0.1f, 3.f);
    std::normal_distribution<float> noise(mu_dist(gen), sigma_dist(gen));
    Tensor w(Shape{10000});
    for (auto& v : w.data) v = noise(gen);
    Tensor signs = quantizer::sign_binarize(standardize_weights(w, 0.f));
    double p_w = 0;
    for (int64_t i = 0; i < signs.numel(); ++i) p_w += signs[i] > 0.f ? 1.0 : 0.0;
    p_w /= static_cast<double>(signs.numel());
    CHECK(p_w >= 0.45);
    CHECK(p_w <= 0.55);
  }
}
