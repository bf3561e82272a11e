#include "qsnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "qsnn/kernels.hpp"
#include "qsnn/serialize.hpp"

namespace qsnn::network {

ArchSpec ArchSpec::desk_mlp() {
  ArchSpec a;
  a.input_shape = {784};
  LayerDesc l1{LayerKind::Linear};
  l1.in_features = 784;
  l1.out_features = 256;
  LayerDesc l2{LayerKind::Linear};
  l2.in_features = 256;
  l2.out_features = 256;
  LayerDesc l3{LayerKind::Linear};
  l3.in_features = 256;
  l3.out_features = 10;
  a.layers = {l1, l2, l3};
  return a;
}

ArchSpec ArchSpec::desk_cnn() {
  ArchSpec a;
  a.input_shape = {1, 28, 28};
  LayerDesc c1{LayerKind::Conv2d};
  c1.in_channels = 1;
  c1.out_channels = 8;
  c1.kernel = 3;
  c1.stride = 2;
  c1.pad = 1;
  LayerDesc c2{LayerKind::Conv2d};
  c2.in_channels = 8;
  c2.out_channels = 16;
  c2.kernel = 3;
  c2.stride = 1;
  c2.pad = 1;
  LayerDesc p2{LayerKind::AvgPool};
  p2.pool = 2;
  LayerDesc c3{LayerKind::Conv2d};
  c3.in_channels = 16;
  c3.out_channels = 32;
  c3.kernel = 3;
  c3.stride = 1;
  c3.pad = 1;
  LayerDesc fl{LayerKind::Flatten};
  LayerDesc f1{LayerKind::Linear};
  f1.in_features = 1568;
  f1.out_features = 128;
  LayerDesc f2{LayerKind::Linear};
  f2.in_features = 128;
  f2.out_features = 10;
  a.layers = {c1, c2, p2, c3, fl, f1, f2};
  return a;
}

namespace {

bool is_weighted(const LayerDesc& d) {
  return d.kind == LayerKind::Conv2d || d.kind == LayerKind::Linear;
}

Shape apply_weighted(const LayerDesc& d, const Shape& in, size_t layer_index) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("arch: layer " + std::to_string(layer_index) + ": " + why);
  };
  if (d.kind == LayerKind::Conv2d) {
    if (in.size() != 3) fail("conv2d expects [C,H,W] input, got " + shape_str(in));
    if (d.stride < 1) fail("conv stride must be >= 1");
    if (d.kernel < 1) fail("conv kernel must be >= 1");
    if (d.pad < 0) fail("conv pad must be >= 0");
    if (in[0] != d.in_channels)
      fail("conv expects " + std::to_string(d.in_channels) + " channels, got " + shape_str(in));
    int64_t oh = (in[1] + 2 * d.pad - d.kernel) / d.stride + 1;
    int64_t ow = (in[2] + 2 * d.pad - d.kernel) / d.stride + 1;
    if (oh < 1 || ow < 1) fail("conv kernel larger than padded input " + shape_str(in));
    return {d.out_channels, oh, ow};
  }
  if (in.size() != 1) fail("linear expects flat input, got " + shape_str(in) + " (add a flatten layer)");
  if (in[0] != d.in_features)
    fail("linear expects " + std::to_string(d.in_features) + " features, got " + shape_str(in));
  if (d.out_features < 1) fail("linear out_features must be >= 1");
  return {d.out_features};
}

Shape apply_post(const LayerDesc& d, const Shape& in, size_t layer_index) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("arch: layer " + std::to_string(layer_index) + ": " + why);
  };
  if (d.kind == LayerKind::AvgPool) {
    if (in.size() != 3) fail("avgpool expects [C,H,W] input, got " + shape_str(in));
    if (d.pool < 1) fail("avgpool kernel must be >= 1");
    int64_t oh = in[1] / d.pool, ow = in[2] / d.pool;
    if (oh < 1 || ow < 1) fail("avgpool window larger than input " + shape_str(in));
    return {in[0], oh, ow};
  }
  // flatten
  return {shape_numel(in)};
}

}  // namespace

std::vector<BlockPlan> plan_blocks(const ArchSpec& arch) {
  arch.lif.validate();
  arch.quant.validate();
  if (arch.timesteps < 1) throw std::invalid_argument("arch: timesteps must be >= 1");
  if (arch.input_shape.empty()) throw std::invalid_argument("arch: missing input shape");
  if (arch.layers.empty()) throw std::invalid_argument("arch: no layers");
  if (!is_weighted(arch.layers[0]))
    throw std::invalid_argument("arch: layer 0 must be conv2d or linear");

  std::vector<BlockPlan> blocks;
  Shape cur = arch.input_shape;
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& d = arch.layers[i];
    if (is_weighted(d)) {
      BlockPlan b;
      b.weighted = d;
      b.in_shape = cur;
      cur = apply_weighted(d, cur, i);
      b.out_shape = cur;
      blocks.push_back(std::move(b));
    } else {
      cur = apply_post(d, cur, i);
      blocks.back().post.push_back(d);
      blocks.back().out_shape = cur;
    }
  }
  int n = static_cast<int>(blocks.size());
  for (int i = 0; i < n; ++i) {
    blocks[i].role = (i == 0 || i == n - 1) ? Role::Boundary : Role::Hidden;
    blocks[i].readout = (i == n - 1) && n >= 2;
    if (blocks[i].weighted.kind == LayerKind::Conv2d) {
      blocks[i].out_channels = blocks[i].weighted.out_channels;
      blocks[i].fan_in = static_cast<int64_t>(blocks[i].weighted.in_channels) *
                         blocks[i].weighted.kernel * blocks[i].weighted.kernel;
    } else {
      blocks[i].out_channels = blocks[i].weighted.out_features;
      blocks[i].fan_in = blocks[i].weighted.in_features;
    }
  }
  if (n == 1) blocks[0].readout = true;  // degenerate single-layer net: pure readout
  if (blocks.back().out_shape.size() != 1)
    throw std::invalid_argument("arch: readout must produce a flat class vector, got " +
                                shape_str(blocks.back().out_shape));
  return blocks;
}

Network build_network(const ArchSpec& arch, uint64_t seed) {
  Network net;
  net.arch = arch;
  net.blocks = plan_blocks(arch);
  std::mt19937_64 rng(seed);
  for (const BlockPlan& b : net.blocks) {
    Shape ws = b.weighted.kind == LayerKind::Conv2d
                   ? Shape{b.weighted.out_channels, b.weighted.in_channels, b.weighted.kernel,
                           b.weighted.kernel}
                   : Shape{b.weighted.out_features, b.weighted.in_features};
    float bound = std::sqrt(6.f / static_cast<float>(b.fan_in));
    std::uniform_real_distribution<float> dist(-bound, bound);
    Tensor w(ws);
    for (auto& v : w.data) v = dist(rng);
    net.weights.push_back(std::move(w));
  }
  return net;
}

uint64_t weight_checksum(const Network& net) {
  uint64_t h = 1469598103934665603ull;
  for (const Tensor& w : net.weights)
    h = serialize::fnv1a(w.data.data(), w.data.size() * sizeof(float), h);
  return h;
}

WeightView weight_view(const Network& net, int block) {
  const BlockPlan& b = net.blocks[static_cast<size_t>(block)];
  WeightView view;
  if (net.frozen) {
    view.effective = net.frozen_weights[static_cast<size_t>(block)];
    view.alpha_w = net.frozen_alpha_w[static_cast<size_t>(block)];
    view.binarized = view.alpha_w.numel() > 0;
    return view;
  }
  const Tensor& w = net.weights[static_cast<size_t>(block)];
  if (b.role == Role::Hidden) {
    Tensor base = net.arch.standardize_hidden
                      ? regulation::standardize_weights(w, net.arch.standardize_eps)
                      : w;
    if (net.arch.quant.weights_binarized()) {
      Tensor flat(Shape{b.out_channels, b.fan_in}, base.data);
      view.alpha_w = quantizer::channel_scale(flat);
      view.effective = quantizer::sign_binarize(base);
      view.binarized = true;
    } else {
      view.effective = std::move(base);
    }
  } else {
    view.effective = net.arch.quant.boundary_weight_bits == 32
                         ? w
                         : quantizer::quantize_weight_kbit(w, net.arch.quant.boundary_weight_bits);
  }
  return view;
}

LayerStates initial_states(const Network& net, int64_t batch) {
  LayerStates st;
  for (const BlockPlan& b : net.blocks) {
    Shape s{batch};
    for (int64_t d : b.out_shape) s.push_back(d);
    st.membrane.emplace_back(s);
  }
  return st;
}

namespace {

Tensor batched(const Shape& per_sample, int64_t batch) {
  Shape s{batch};
  for (int64_t d : per_sample) s.push_back(d);
  return Tensor(s);
}

Tensor scale_channels_value(const Tensor& x, const Tensor& alpha) {
  int64_t channels = x.shape[1];
  int64_t inner = 1;
  for (size_t i = 2; i < x.ndim(); ++i) inner *= x.shape[i];
  Tensor out(x.shape);
  for (int64_t b = 0; b < x.shape[0]; ++b)
    for (int64_t c = 0; c < channels; ++c) {
      float s = alpha[c];
      const float* src = x.data.data() + (b * channels + c) * inner;
      float* dst = out.data.data() + (b * channels + c) * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] = src[i] * s;
    }
  return out;
}

void check_state(const Network& net, const LayerStates& state, int64_t batch) {
  if (state.membrane.size() != net.blocks.size())
    throw std::invalid_argument("forward: state has " + std::to_string(state.membrane.size()) +
                                " layers, network has " + std::to_string(net.blocks.size()));
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    Shape want{batch};
    for (int64_t d : net.blocks[i].out_shape) want.push_back(d);
    if (state.membrane[i].shape != want)
      throw std::invalid_argument("forward: state shape " + shape_str(state.membrane[i].shape) +
                                  " does not match block " + std::to_string(i) + " " +
                                  shape_str(want));
  }
}

}  // namespace

Tensor synaptic_input(const Network& net, int block, const Tensor& x) {
  const BlockPlan& b = net.blocks[static_cast<size_t>(block)];
  WeightView view = weight_view(net, block);
  Tensor syn = b.weighted.kind == LayerKind::Conv2d
                   ? kernels::conv2d_forward(x, view.effective, b.weighted.stride, b.weighted.pad)
                   : kernels::linear_forward(x, view.effective);
  if (view.binarized) syn = scale_channels_value(syn, view.alpha_w);
  for (const LayerDesc& p : b.post) {
    if (p.kind == LayerKind::AvgPool)
      syn = kernels::avgpool2d_forward(syn, p.pool);
    else {
      Shape s{syn.shape[0], syn.numel() / syn.shape[0]};
      syn = Tensor(std::move(s), std::move(syn.data));
    }
  }
  return syn;
}

StepOutput forward_timestep(const Network& net, const Tensor& input_t, LayerStates& state) {
  if (input_t.ndim() < 2)
    throw std::invalid_argument("forward: input must be batched, got " + shape_str(input_t.shape));
  int64_t batch = input_t.shape[0];
  check_state(net, state, batch);
  const LifParams& lif = net.arch.lif;
  const QuantSpec& quant = net.arch.quant;

  StepOutput out;
  out.alpha_u.assign(net.blocks.size(), 0.f);
  Tensor x = input_t;
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    const BlockPlan& b = net.blocks[i];
    Tensor syn = synaptic_input(net, static_cast<int>(i), x);
    Tensor& u = state.membrane[i];
    if (b.readout) {
      for (int64_t j = 0; j < u.numel(); ++j)
        u[j] = neuron::lif_update_scalar(lif.tau, u[j], syn[j]);
      out.logits = u;
      continue;
    }
    Tensor u_pre(u.shape);
    for (int64_t j = 0; j < u.numel(); ++j)
      u_pre[j] = neuron::lif_update_scalar(lif.tau, u[j], syn[j]);
    float alpha_u = 1.f;
    Tensor u_q;
    if (quant.membrane_quantized()) {
      alpha_u = net.frozen ? net.frozen_alpha_u[i] : quantizer::layer_scale(u_pre);
      u_q = quantizer::quantize_membrane(u_pre, quant.membrane_bits, alpha_u);
    } else {
      u_q = std::move(u_pre);
    }
    out.alpha_u[i] = alpha_u;
    Tensor spikes(u_q.shape);
    for (int64_t j = 0; j < u_q.numel(); ++j) spikes[j] = neuron::fire_scalar(u_q[j], lif.theta);
    for (int64_t j = 0; j < u_q.numel(); ++j) u[j] = u_q[j] * (1.f - spikes[j]);
    x = spikes;
    out.spikes.push_back(std::move(spikes));
  }
  return out;
}

WindowResult forward_window(const Network& net, const Tensor& input_batch) {
  int64_t batch = input_batch.shape[0];
  LayerStates state = initial_states(net, batch);
  int timesteps = net.arch.timesteps;

  std::vector<size_t> spiking_blocks;
  for (size_t i = 0; i < net.blocks.size(); ++i)
    if (net.blocks[i].spiking()) spiking_blocks.push_back(i);

  WindowResult res;
  res.max_alpha_u.assign(net.blocks.size(), 0.f);
  std::vector<Tensor> records;
  for (size_t i : spiking_blocks) {
    int64_t neurons = batch * shape_numel(net.blocks[i].out_shape);
    records.emplace_back(Shape{neurons, timesteps});
  }
  for (int t = 0; t < timesteps; ++t) {
    StepOutput step = forward_timestep(net, input_batch, state);
    res.logits_per_step.push_back(std::move(step.logits));
    for (size_t k = 0; k < spiking_blocks.size(); ++k) {
      const Tensor& s = step.spikes[k];
      Tensor& rec = records[k];
      for (int64_t j = 0; j < s.numel(); ++j) rec[j * timesteps + t] = s[j];
    }
    for (size_t i = 0; i < net.blocks.size(); ++i)
      res.max_alpha_u[i] = std::max(res.max_alpha_u[i], step.alpha_u[i]);
  }
  for (Tensor& rec : records) {
    res.firing_rates.push_back(regulation::firing_rate(rec));
    res.spike_records.push_back(std::move(rec));
  }
  return res;
}

GraphWindow forward_window_graph(const Network& net, const Tensor& input_batch) {
  int64_t batch = input_batch.shape[0];
  int timesteps = net.arch.timesteps;
  const LifParams& lif = net.arch.lif;
  const QuantSpec& quant = net.arch.quant;

  GraphWindow gw;
  std::vector<ad::NodePtr> weight_nodes;   // effective view per block
  std::vector<Tensor> alpha_w(net.blocks.size());
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    const BlockPlan& b = net.blocks[i];
    ad::NodePtr w = ad::leaf(net.weights[i], "w" + std::to_string(i));
    gw.weight_leaves.push_back(w);
    ad::NodePtr eff = w;
    if (b.role == Role::Hidden) {
      if (net.arch.standardize_hidden)
        eff = regulation::standardize_node(eff, net.arch.standardize_eps);
      if (quant.weights_binarized()) {
        Tensor flat(Shape{b.out_channels, b.fan_in}, eff->value.data);
        alpha_w[i] = quantizer::channel_scale(flat);
        eff = quantizer::sign_binarize_node(eff);
      }
    } else if (quant.boundary_weight_bits != 32) {
      eff = quantizer::quantize_weight_kbit_node(eff, quant.boundary_weight_bits);
    }
    weight_nodes.push_back(eff);
  }

  std::vector<ad::NodePtr> membrane(net.blocks.size());  // post-reset / integrator
  for (size_t i = 0; i < net.blocks.size(); ++i)
    membrane[i] = ad::leaf(batched(net.blocks[i].out_shape, batch), "u0");

  std::vector<size_t> spiking_blocks;
  for (size_t i = 0; i < net.blocks.size(); ++i)
    if (net.blocks[i].spiking()) spiking_blocks.push_back(i);
  std::vector<std::vector<ad::NodePtr>> spikes_by_block(spiking_blocks.size());

  ad::NodePtr input = ad::leaf(input_batch, "input");
  for (int t = 0; t < timesteps; ++t) {
    ad::NodePtr x = input;
    size_t spike_slot = 0;
    for (size_t i = 0; i < net.blocks.size(); ++i) {
      const BlockPlan& b = net.blocks[i];
      ad::NodePtr syn = b.weighted.kind == LayerKind::Conv2d
                            ? ad::conv2d(x, weight_nodes[i], b.weighted.stride, b.weighted.pad)
                            : ad::matmul(x, weight_nodes[i], false, true);
      if (alpha_w[i].numel() > 0) syn = ad::scale_channels(syn, alpha_w[i]);
      for (const LayerDesc& p : b.post) {
        if (p.kind == LayerKind::AvgPool)
          syn = ad::avgpool2d(syn, p.pool);
        else
          syn = ad::reshape(syn, Shape{batch, shape_numel(b.out_shape)});
      }
      ad::NodePtr u_pre = ad::add(ad::scalar_mul(membrane[i], lif.tau), syn);
      if (b.readout) {
        membrane[i] = u_pre;
        continue;
      }
      ad::NodePtr u_q = u_pre;
      if (quant.membrane_quantized()) {
        float alpha_u = net.frozen ? net.frozen_alpha_u[i] : quantizer::layer_scale(u_pre->value);
        u_q = quantizer::quantize_membrane_node(u_pre, quant.membrane_bits, alpha_u);
      }
      ad::NodePtr s = neuron::fire_node(u_q, lif);
      membrane[i] = neuron::hard_reset_node(u_q, s->value);
      spikes_by_block[spike_slot++].push_back(s);
      x = s;
    }
    gw.logits_per_step.push_back(membrane.back());
  }

  for (size_t k = 0; k < spiking_blocks.size(); ++k) {
    size_t i = spiking_blocks[k];
    if (net.blocks[i].role == Role::Hidden)
      gw.hidden_rates.push_back(ad::mean_all(ad::concat0(spikes_by_block[k])));
    int64_t neurons = batch * shape_numel(net.blocks[i].out_shape);
    Tensor rec(Shape{neurons, timesteps});
    for (int t = 0; t < timesteps; ++t) {
      const Tensor& s = spikes_by_block[k][static_cast<size_t>(t)]->value;
      for (int64_t j = 0; j < s.numel(); ++j) rec[j * timesteps + t] = s[j];
    }
    gw.spike_records.push_back(std::move(rec));
  }
  return gw;
}

Trainer::Trainer(Network& net, OptimizerConfig opt, int total_epochs, double lambda)
    : net_(net), opt_(std::move(opt)), total_epochs_(total_epochs), lambda_(lambda) {
  if (net_.frozen) throw std::invalid_argument("trainer: network is frozen");
  if (opt_.name != "sgd" && opt_.name != "adam")
    throw std::invalid_argument("trainer: unknown optimizer '" + opt_.name + "'");
  size_t per = opt_.name == "adam" ? 2 : 1;
  for (size_t rep = 0; rep < per; ++rep)
    for (const Tensor& w : net_.weights) slots_.emplace_back(w.shape);
}

void Trainer::apply_update(int epoch_index, const std::vector<ad::NodePtr>& leaves) {
  double lr = opt_.lr;
  if (opt_.cosine && total_epochs_ > 1)
    lr = opt_.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch_index) /
                                         static_cast<double>(total_epochs_)));
  size_t n = net_.weights.size();
  if (opt_.name == "sgd") {
    for (size_t i = 0; i < n; ++i) {
      Tensor& w = net_.weights[i];
      Tensor& v = slots_[i];
      const Tensor& g = leaves[i]->grad;
      for (int64_t j = 0; j < w.numel(); ++j) {
        v[j] = static_cast<float>(opt_.momentum * v[j] + g[j]);
        w[j] -= static_cast<float>(lr * v[j]);
      }
    }
  } else {
    ++adam_steps_;
    double b1 = opt_.adam_beta1, b2 = opt_.adam_beta2;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_steps_));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_steps_));
    for (size_t i = 0; i < n; ++i) {
      Tensor& w = net_.weights[i];
      Tensor& m = slots_[i];
      Tensor& v = slots_[n + i];
      const Tensor& g = leaves[i]->grad;
      for (int64_t j = 0; j < w.numel(); ++j) {
        m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g[j]);
        v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * g[j] * g[j]);
        double mh = m[j] / bc1, vh = v[j] / bc2;
        w[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + opt_.adam_eps));
      }
    }
  }
}

TrainReport Trainer::train_epoch(const std::vector<data::LabelledBatch>& batches,
                                 int epoch_index) {
  if (batches.empty()) throw std::invalid_argument("train_epoch: empty batch stream");
  TrainReport report;
  report.epoch = epoch_index;

  size_t n_spiking = 0;
  for (const BlockPlan& b : net_.blocks)
    if (b.spiking()) ++n_spiking;
  std::vector<double> rate_acc(n_spiking, 0.0);
  int64_t total = 0, correct = 0;
  double ce_acc = 0.0, ls_acc = 0.0;
  int64_t seen_batches = 0;

  for (size_t bi = 0; bi < batches.size(); ++bi) {
    const data::LabelledBatch& batch = batches[bi];
    int64_t bsz = batch.inputs.shape[0];
    GraphWindow gw = forward_window_graph(net_, batch.inputs);

    int timesteps = net_.arch.timesteps;
    ad::NodePtr ce_sum = ad::softmax_cross_entropy(gw.logits_per_step[0], batch.labels);
    for (int t = 1; t < timesteps; ++t)
      ce_sum = ad::add(ce_sum, ad::softmax_cross_entropy(gw.logits_per_step[static_cast<size_t>(t)],
                                                         batch.labels));
    ad::NodePtr ce_mean = ad::scalar_mul(ce_sum, 1.f / static_cast<float>(timesteps));

    ad::NodePtr loss = ce_mean;
    double ls_value = 0.0;
    if (!gw.hidden_rates.empty()) {
      ad::NodePtr target = ad::leaf(Tensor::scalar(-0.5f), "rate-target");
      ad::NodePtr ls;
      for (const ad::NodePtr& f : gw.hidden_rates) {
        ad::NodePtr d = ad::add(f, target);
        ad::NodePtr sq = ad::mul(d, d);
        ls = ls ? ad::add(ls, sq) : sq;
      }
      ls_value = static_cast<double>(ls->value[0]);
      loss = ad::add(ce_mean, ad::scalar_mul(ls, static_cast<float>(lambda_)));
    }
    if (!std::isfinite(loss->value[0])) throw non_finite_loss(static_cast<int>(bi));

    ad::backpropagate(loss, Tensor::scalar(1.f));
    apply_update(epoch_index, gw.weight_leaves);

    // batch accuracy from time-averaged logits
    int64_t classes = net_.num_classes();
    for (int64_t s = 0; s < bsz; ++s) {
      int best = 0;
      double best_v = -1e300;
      for (int64_t c = 0; c < classes; ++c) {
        double acc = 0.0;
        for (int t = 0; t < timesteps; ++t)
          acc += gw.logits_per_step[static_cast<size_t>(t)]->value[s * classes + c];
        if (acc > best_v) {
          best_v = acc;
          best = static_cast<int>(c);
        }
      }
      if (best == batch.labels[static_cast<size_t>(s)]) ++correct;
    }
    total += bsz;
    ce_acc += static_cast<double>(ce_mean->value[0]);
    ls_acc += ls_value;
    ++seen_batches;
    size_t slot = 0;
    for (size_t i = 0; i < net_.blocks.size(); ++i)
      if (net_.blocks[i].spiking())
        rate_acc[slot] += regulation::firing_rate(gw.spike_records[slot]), ++slot;
  }

  report.ce_loss = ce_acc / static_cast<double>(seen_batches);
  report.ls_loss = ls_acc / static_cast<double>(seen_batches);
  report.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  for (double r : rate_acc) report.firing_rates.push_back(r / static_cast<double>(seen_batches));

  // distribution snapshot from the last batch's spikes and current weights
  {
    WindowResult wr = forward_window(net_, batches.back().inputs);
    report.stats = layer_stats(net_, wr.spike_records);
  }
  return report;
}

std::vector<regulation::EntropyReport> layer_stats(const Network& net,
                                                   const std::vector<Tensor>& spike_records) {
  std::vector<regulation::EntropyReport> stats;
  size_t slot = 0;
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    regulation::EntropyReport r;
    WeightView view = weight_view(net, static_cast<int>(i));
    const Tensor w = view.binarized ? view.effective : quantizer::sign_binarize(view.effective);
    int64_t pos = 0;
    for (int64_t j = 0; j < w.numel(); ++j)
      if (w[j] > 0.f) ++pos;
    r.p_w = static_cast<double>(pos) / static_cast<double>(w.numel());
    r.entropy_w_nats = regulation::bernoulli_entropy(r.p_w);
    if (net.blocks[i].spiking() && slot < spike_records.size()) {
      r.p_s = regulation::firing_rate(spike_records[slot]);
      r.entropy_s_nats = regulation::bernoulli_entropy(r.p_s);
      ++slot;
    }
    stats.push_back(r);
  }
  return stats;
}

double evaluate(const Network& net, const data::LabelledSet& set) {
  if (set.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  int64_t n = set.size();
  int64_t classes = net.num_classes();
  int64_t correct = 0;
  const int64_t chunk = 512;
  int64_t sample = set.inputs.numel() / n;
  for (int64_t start = 0; start < n; start += chunk) {
    int64_t b = std::min(chunk, n - start);
    Shape s = set.inputs.shape;
    s[0] = b;
    Tensor batch(s);
    std::copy_n(set.inputs.data.begin() + start * sample, b * sample, batch.data.begin());
    WindowResult wr = forward_window(net, batch);
    for (int64_t i = 0; i < b; ++i) {
      int best = 0;
      double best_v = -1e300;
      for (int64_t c = 0; c < classes; ++c) {
        double acc = 0.0;
        for (const Tensor& logits : wr.logits_per_step) acc += logits[i * classes + c];
        if (acc > best_v) {
          best_v = acc;
          best = static_cast<int>(c);
        }
      }
      if (best == set.labels[static_cast<size_t>(start + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

Tensor canary_inputs(const Network& net, int64_t count) {
  std::mt19937_64 rng(0xC0FFEEull ^ serialize::arch_digest(net.arch));
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  Shape s{count};
  for (int64_t d : net.arch.input_shape) s.push_back(d);
  Tensor t(s);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

void freeze(Network& net) {
  if (net.frozen) throw std::invalid_argument("freeze: network already frozen");
  if (net.arch.quant.membrane_bits == 32)
    throw std::invalid_argument("freeze: packed path requires membrane bits <= 8, got 32");
  if (net.arch.quant.hidden_weight_bits != 1 && net.blocks.size() > 2)
    throw std::invalid_argument("freeze: packed path requires 1-bit hidden weights");

  // Materialize the quantized views first so calibration sees frozen weights.
  net.frozen_weights.clear();
  net.frozen_alpha_w.clear();
  for (size_t i = 0; i < net.blocks.size(); ++i) {
    WeightView view = weight_view(net, static_cast<int>(i));
    net.frozen_weights.push_back(std::move(view.effective));
    net.frozen_alpha_w.push_back(std::move(view.alpha_w));
  }
  // Calibrate alpha_u on the canary batch using live per-step scales.
  Tensor canary = canary_inputs(net);
  WindowResult wr = forward_window(net, canary);
  net.frozen_alpha_u.assign(net.blocks.size(), 1.f);
  for (size_t i = 0; i < net.blocks.size(); ++i)
    if (net.blocks[i].spiking() && wr.max_alpha_u[i] > 0.f)
      net.frozen_alpha_u[i] = wr.max_alpha_u[i];
  net.frozen = true;

  // Parity hash of the frozen reference forward on the canary input.
  WindowResult ref = forward_window(net, canary);
  uint64_t h = 1469598103934665603ull;
  for (const Tensor& rec : ref.spike_records)
    h = serialize::fnv1a(rec.data.data(), rec.data.size() * sizeof(float), h);
  for (const Tensor& logits : ref.logits_per_step)
    h = serialize::fnv1a(logits.data.data(), logits.data.size() * sizeof(float), h);
  net.canary_hash = h;
}

}  // namespace qsnn::network
