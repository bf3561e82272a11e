#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "qsnn/network.hpp"
#include "qsnn/serialize.hpp"

using namespace qsnn;
using namespace qsnn::network;

namespace {

ArchSpec tiny_mlp(int in, int hidden, int out) {
  ArchSpec a;
  a.input_shape = {in};
  LayerDesc l1{LayerKind::Linear};
  l1.in_features = in;
  l1.out_features = hidden;
  LayerDesc l2{LayerKind::Linear};
  l2.in_features = hidden;
  l2.out_features = out;
  a.layers = {l1, l2};
  return a;
}

ArchSpec float_arch(ArchSpec a) {
  a.quant.hidden_weight_bits = 32;
  a.quant.boundary_weight_bits = 32;
  a.quant.membrane_bits = 32;
  a.standardize_hidden = false;
  return a;
}

// Exactly separable 2-class planar set.
data::LabelledBatch separable_batch(int n) {
  data::LabelledBatch batch;
  batch.inputs = Tensor(Shape{n, 2});
  batch.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int y = i % 2;
    float t = static_cast<float>(i) / n;
    batch.inputs[i * 2 + 0] = y == 0 ? 0.1f + 0.2f * t : 0.7f + 0.2f * t;
    batch.inputs[i * 2 + 1] = 0.2f + 0.6f * t;
    batch.labels[static_cast<size_t>(i)] = y;
  }
  return batch;
}

}  // namespace

TEST_CASE("build_network is deterministic per seed") {
  ArchSpec arch = ArchSpec::desk_cnn();
  Network a = build_network(arch, 7);
  Network b = build_network(arch, 7);
  Network c = build_network(arch, 8);
  CHECK(weight_checksum(a) == weight_checksum(b));
  CHECK(weight_checksum(a) != weight_checksum(c));
}

TEST_CASE("role tagging: 2-layer nets have no hidden layers") {
  Network net = build_network(tiny_mlp(784, 128, 10), 1);
  REQUIRE(net.blocks.size() == 2);
  CHECK(net.blocks[0].role == Role::Boundary);
  CHECK(net.blocks[1].role == Role::Boundary);
  CHECK(net.blocks[0].spiking());
  CHECK(net.blocks[1].readout);

  Network mlp = build_network(ArchSpec::desk_mlp(), 1);
  REQUIRE(mlp.blocks.size() == 3);
  CHECK(mlp.blocks[0].role == Role::Boundary);
  CHECK(mlp.blocks[1].role == Role::Hidden);
  CHECK(mlp.blocks[2].role == Role::Boundary);
}

TEST_CASE("arch validation names the offending layer") {
  ArchSpec bad = ArchSpec::desk_cnn();
  bad.layers[0].stride = 0;
  CHECK_THROWS_WITH_AS(plan_blocks(bad), doctest::Contains("layer 0"), std::invalid_argument);

  ArchSpec mismatched = ArchSpec::desk_cnn();
  mismatched.layers[3].in_channels = 99;
  CHECK_THROWS_WITH_AS(plan_blocks(mismatched), doctest::Contains("layer 3"),
                       std::invalid_argument);

  ArchSpec no_flatten = tiny_mlp(784, 16, 10);
  no_flatten.input_shape = {1, 28, 28};
  CHECK_THROWS_WITH_AS(plan_blocks(no_flatten), doctest::Contains("flatten"),
                       std::invalid_argument);
}

TEST_CASE("quiescence: zero input and zero state produce zero spikes") {
  ArchSpec arch = ArchSpec::desk_mlp();
  arch.quant.membrane_bits = 2;
  Network net = build_network(arch, 3);
  Tensor zero(Shape{2, 784});
  WindowResult wr = forward_window(net, zero);
  for (double r : wr.firing_rates) CHECK(r == 0.0);
  for (const Tensor& logits : wr.logits_per_step)
    for (int64_t i = 0; i < logits.numel(); ++i) CHECK(logits[i] == 0.f);
}

TEST_CASE("hand trace: unit chain integrates, fires and resets") {
  ArchSpec a;
  a.input_shape = {1};
  LayerDesc l{LayerKind::Linear};
  l.in_features = 1;
  l.out_features = 1;
  a.layers = {l, l, l};
  a.quant.membrane_bits = 32;  // no membrane quantization
  a.standardize_hidden = false;
  a.timesteps = 1;
  Network net = build_network(a, 0);
  for (Tensor& w : net.weights) w[0] = 1.f;  // sign +1, alpha_w = 1, boundary q8(1) = 1

  LayerStates st = initial_states(net, 1);
  StepOutput step = forward_timestep(net, Tensor({1, 1}, {1.f}), st);
  // input 1 -> boundary layer: u = 0.5*0 + 1 = 1 >= theta -> spike, reset
  CHECK(step.spikes[0][0] == 1.f);
  CHECK(st.membrane[0][0] == 0.f);
  // hidden layer receives the spike through alpha_w * sign = 1
  CHECK(step.spikes[1][0] == 1.f);
  CHECK(st.membrane[1][0] == 0.f);
  // readout integrates without firing
  CHECK(step.logits[0] == 1.f);
  CHECK(st.membrane[2][0] == 1.f);
}

TEST_CASE("full-precision engine matches the independent LIF simulator") {
  for (uint64_t seed : {11ull, 12ull}) {
    ArchSpec arch = float_arch(tiny_mlp(6, 9, 4));
    arch.timesteps = 4;
    Network net = build_network(arch, seed);
    Tensor x = oracles::random_tensor({1, 6}, seed + 100, 0.f, 1.f);

    std::vector<float> xv(x.data.begin(), x.data.end());
    auto trace = oracles::reference_lif_mlp(net.weights, xv, 4, arch.lif.tau, arch.lif.theta);
    WindowResult wr = forward_window(net, x);
    for (int t = 0; t < 4; ++t)
      for (int c = 0; c < 4; ++c)
        CHECK(wr.logits_per_step[t][c] ==
              doctest::Approx(trace.logits_per_step[t][c]).epsilon(1e-5));
    for (int t = 0; t < 4; ++t)
      for (int n = 0; n < 9; ++n)
        CHECK(wr.spike_records[0][n * 4 + t] == trace.spikes[0][t][n]);
  }
  // 3-layer variant exercises the hidden-block path
  ArchSpec arch3 = float_arch(ArchSpec::desk_mlp());
  arch3.input_shape = {5};
  arch3.layers[0].in_features = 5;
  arch3.layers[0].out_features = 7;
  arch3.layers[1].in_features = 7;
  arch3.layers[1].out_features = 6;
  arch3.layers[2].in_features = 6;
  arch3.layers[2].out_features = 3;
  arch3.timesteps = 3;
  Network net3 = build_network(arch3, 21);
  Tensor x3 = oracles::random_tensor({1, 5}, 22, 0.f, 1.f);
  std::vector<float> xv3(x3.data.begin(), x3.data.end());
  auto trace3 = oracles::reference_lif_mlp(net3.weights, xv3, 3, arch3.lif.tau, arch3.lif.theta);
  WindowResult wr3 = forward_window(net3, x3);
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 3; ++c)
      CHECK(wr3.logits_per_step[t][c] ==
            doctest::Approx(trace3.logits_per_step[t][c]).epsilon(1e-5));
}

TEST_CASE("graph forward reproduces the value path bit for bit") {
  ArchSpec arch = ArchSpec::desk_cnn();
  arch.quant.membrane_bits = 2;
  Network net = build_network(arch, 5);
  Tensor x = oracles::random_tensor({3, 1, 28, 28}, 50, 0.f, 1.f);
  WindowResult wr = forward_window(net, x);
  GraphWindow gw = forward_window_graph(net, x);
  REQUIRE(wr.logits_per_step.size() == gw.logits_per_step.size());
  for (size_t t = 0; t < wr.logits_per_step.size(); ++t)
    for (int64_t i = 0; i < wr.logits_per_step[t].numel(); ++i)
      CHECK(wr.logits_per_step[t][i] == gw.logits_per_step[t]->value[i]);
  REQUIRE(wr.spike_records.size() == gw.spike_records.size());
  for (size_t k = 0; k < wr.spike_records.size(); ++k)
    for (int64_t i = 0; i < wr.spike_records[k].numel(); ++i)
      CHECK(wr.spike_records[k][i] == gw.spike_records[k][i]);
}

TEST_CASE("hidden-layer traffic is strictly binary and records are [N, T]") {
  ArchSpec arch = ArchSpec::desk_cnn();
  arch.quant.membrane_bits = 2;
  Network net = build_network(arch, 9);
  Tensor x = oracles::random_tensor({2, 1, 28, 28}, 51, 0.f, 1.f);
  WindowResult wr = forward_window(net, x);
  size_t slot = 0;
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    if (!net.blocks[i].spiking()) continue;
    const Tensor& rec = wr.spike_records[slot++];
    CHECK(rec.shape == Shape{2 * shape_numel(net.blocks[i].out_shape),
                             static_cast<int64_t>(arch.timesteps)});
    for (float v : rec.data) CHECK((v == 0.f || v == 1.f));
  }
}

TEST_CASE("fire is invariant to joint scaling of membrane and threshold") {
  Tensor u = oracles::random_tensor({128}, 61, -2.f, 3.f);
  neuron::LifParams p;
  Tensor base = neuron::fire(u, p);
  for (float c : {0.5f, 2.f, 7.f}) {
    neuron::LifParams scaled;
    scaled.theta = p.theta * c;
    Tensor us(u.shape);
    for (int64_t i = 0; i < u.numel(); ++i) us[i] = u[i] * c;
    Tensor s = neuron::fire(us, scaled);
    for (int64_t i = 0; i < u.numel(); ++i) CHECK(s[i] == base[i]);
  }
}

TEST_CASE("doubling the input doubles the first boundary pre-activation") {
  ArchSpec arch = ArchSpec::desk_cnn();
  Network net = build_network(arch, 13);
  Tensor x = oracles::random_tensor({1, 1, 28, 28}, 70, 0.f, 0.5f);
  Tensor x2(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) x2[i] = 2.f * x[i];
  Tensor syn1 = synaptic_input(net, 0, x);
  Tensor syn2 = synaptic_input(net, 0, x2);
  for (int64_t i = 0; i < syn1.numel(); ++i)
    CHECK(syn2[i] == doctest::Approx(2.f * syn1[i]).epsilon(1e-6));
}

TEST_CASE("weight views re-derive consistently from the latents") {
  ArchSpec arch = ArchSpec::desk_mlp();
  Network net = build_network(arch, 17);
  WeightView before = weight_view(net, 1);
  WeightView again = weight_view(net, 1);
  CHECK(before.effective.data == again.effective.data);
  CHECK(before.alpha_w.data == again.alpha_w.data);

  // after an optimizer step the view still matches a manual re-derivation
  Trainer trainer(net, OptimizerConfig{}, 1, 0.0);
  auto batch = separable_batch(8);
  Tensor wide(Shape{8, 784});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 2; ++j) wide[i * 784 + j] = batch.inputs[i * 2 + j];
  trainer.train_epoch({data::LabelledBatch{wide, batch.labels}}, 0);
  WeightView view = weight_view(net, 1);
  Tensor manual = quantizer::sign_binarize(
      regulation::standardize_weights(net.weights[1], arch.standardize_eps));
  CHECK(view.effective.data == manual.data);
}

TEST_CASE("train_epoch solves a separable toy task and is deterministic") {
  ArchSpec arch = float_arch(tiny_mlp(2, 16, 2));
  arch.timesteps = 2;
  auto run = [&](uint64_t seed) {
    Network net = build_network(arch, seed);
    OptimizerConfig opt;
    opt.lr = 0.5;
    Trainer trainer(net, opt, 50, /*lambda=*/0.0);
    std::vector<data::LabelledBatch> batches{separable_batch(64)};
    TrainReport last;
    for (int e = 0; e < 50; ++e) last = trainer.train_epoch(batches, e);
    return std::pair<Network, TrainReport>(std::move(net), last);
  };
  auto [net1, rep1] = run(123);
  CHECK(rep1.accuracy == 1.0);

  auto [net2, rep2] = run(123);
  CHECK(rep1.ce_loss == rep2.ce_loss);
  CHECK(rep1.accuracy == rep2.accuracy);
  CHECK(weight_checksum(net1) == weight_checksum(net2));

  // a perfectly memorized set evaluates to exactly 1.0
  data::LabelledSet set;
  auto batch = separable_batch(64);
  set.inputs = batch.inputs;
  set.labels = batch.labels;
  set.num_classes = 2;
  CHECK(evaluate(net1, set) == 1.0);
}

TEST_CASE("L_s head gradient matches finite differences closely") {
  auto build = [](ad::NodePtr rates) {
    auto target = ad::leaf(Tensor::scalar(-0.5f));
    ad::NodePtr total;
    // treat each coordinate as one layer's rate: sum (f - 0.5)^2
    for (int64_t i = 0; i < rates->value.numel(); ++i) {
      Tensor pick(rates->value.shape);
      pick[i] = 1.f;
      auto f = ad::sum_all(ad::mul(rates, ad::leaf(pick)));
      auto d = ad::add(f, target);
      auto sq = ad::mul(d, d);
      total = total ? ad::add(total, sq) : sq;
    }
    return total;
  };
  Tensor point({3}, {0.3f, 0.7f, 0.1f});
  CHECK(ad::finite_difference_check(build, point, 1e-2) < 1e-4);
}

TEST_CASE("non-finite loss aborts naming the batch") {
  ArchSpec arch = float_arch(tiny_mlp(2, 4, 2));
  Network net = build_network(arch, 3);
  for (auto& v : net.weights[0].data) v = std::numeric_limits<float>::infinity();
  Trainer trainer(net, OptimizerConfig{}, 1, 0.0);
  std::vector<data::LabelledBatch> batches{separable_batch(4)};
  CHECK_THROWS_AS(trainer.train_epoch(batches, 0), non_finite_loss);
  try {
    trainer.train_epoch(batches, 0);
    FAIL("expected non_finite_loss");
  } catch (const non_finite_loss& e) {
    CHECK(e.batch_index == 0);
  }
}

TEST_CASE("evaluate: chance level on random labels, error on empty stream") {
  ArchSpec arch = ArchSpec::desk_mlp();
  Network net = build_network(arch, 77);
  data::LabelledSet set;
  set.inputs = oracles::random_tensor({2000, 784}, 78, 0.f, 1.f);
  set.num_classes = 10;
  std::mt19937_64 gen(79);
  std::uniform_int_distribution<int> lab(0, 9);
  for (int i = 0; i < 2000; ++i) set.labels.push_back(lab(gen));
  double acc = evaluate(net, set);
  CHECK(acc > 0.1 - 0.03);
  CHECK(acc < 0.1 + 0.03);

  data::LabelledSet empty;
  CHECK_THROWS_AS(evaluate(net, empty), std::invalid_argument);
}

TEST_CASE("checkpoint container round trips and rejects corruption") {
  ArchSpec arch = ArchSpec::desk_mlp();
  arch.quant.membrane_bits = 4;
  Network net = build_network(arch, 99);
  Trainer trainer(net, OptimizerConfig{}, 2, 1e-3);

  auto path = std::string("/tmp/qsnn_test_ckpt.bin");
  serialize::save_checkpoint(path, net, "{\"note\":1}", 2, "sgd", trainer.slots(), 0);
  serialize::Checkpoint ck = serialize::load_checkpoint(path);
  CHECK(ck.epoch == 2);
  CHECK(ck.extra_json == "{\"note\":1}");
  CHECK(ck.optimizer == "sgd");
  CHECK(weight_checksum(ck.net) == weight_checksum(net));
  CHECK(serialize::arch_digest(ck.net.arch) == serialize::arch_digest(net.arch));
  CHECK(ck.slots.size() == trainer.slots().size());

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_WITH_AS(serialize::load_checkpoint(path), doctest::Contains("magic"),
                       std::runtime_error);
  serialize::save_checkpoint(path, net, "", 0, "sgd", {}, 0);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    f.put(static_cast<char>(9));
  }
  CHECK_THROWS_WITH_AS(serialize::load_checkpoint(path), doctest::Contains("version"),
                       std::runtime_error);
}

TEST_CASE("arch json round trips") {
  ArchSpec arch = ArchSpec::desk_cnn();
  arch.quant.membrane_bits = 2;
  arch.timesteps = 4;
  ArchSpec back = serialize::arch_from_json(serialize::arch_to_json(arch));
  CHECK(serialize::arch_digest(back) == serialize::arch_digest(arch));
  CHECK(back.layers.size() == arch.layers.size());
  CHECK(back.quant.membrane_bits == 2);
}
