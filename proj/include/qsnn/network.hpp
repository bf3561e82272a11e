#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsnn/autodiff.hpp"
#include "qsnn/data.hpp"
#include "qsnn/neuron.hpp"
#include "qsnn/quantizer.hpp"
#include "qsnn/regulation.hpp"
#include "qsnn/tensor.hpp"

namespace qsnn::network {

using neuron::LifParams;
using quantizer::QuantSpec;

enum class LayerKind { Conv2d, Linear, AvgPool, Flatten };

struct LayerDesc {
  LayerKind kind = LayerKind::Linear;
  int in_channels = 0, out_channels = 0, kernel = 0, stride = 1, pad = 0;  // conv2d
  int in_features = 0, out_features = 0;                                   // linear
  int pool = 2;                                                            // avgpool
};

/// Declarative network description. The first and last weighted layers are
/// boundary (k-bit weights); everything in between is hidden (1-bit).
struct ArchSpec {
  Shape input_shape;  // per-sample, e.g. {1,28,28} or {784}
  std::vector<LayerDesc> layers;
  LifParams lif;
  QuantSpec quant;
  int timesteps = 2;
  bool standardize_hidden = true;
  float standardize_eps = 1e-5f;

  static ArchSpec desk_mlp();  // 784-256-256-10
  static ArchSpec desk_cnn();  // 3 conv + 2 fc on 1x28x28
};

enum class Role { Boundary, Hidden };

/// One weighted layer plus the pool/flatten stages applied to its output
/// before the LIF dynamics. Spikes flowing between blocks stay binary;
/// pooling happens on the synaptic signal inside the block.
struct BlockPlan {
  LayerDesc weighted;
  std::vector<LayerDesc> post;  // avgpool / flatten in declaration order
  Role role = Role::Hidden;
  bool readout = false;  // last block: non-spiking leaky integrator
  Shape in_shape, out_shape;  // per-sample
  int64_t out_channels = 0, fan_in = 0;

  bool spiking() const { return !readout; }
};

struct Network {
  ArchSpec arch;
  std::vector<BlockPlan> blocks;
  std::vector<Tensor> weights;  // latent per block: conv [OC,C,K,K], linear [Out,In]

  bool frozen = false;
  std::vector<Tensor> frozen_weights;  // hidden: signs in {-1,+1}; boundary: quantized values
  std::vector<Tensor> frozen_alpha_w;  // hidden binarized: [OC]; else empty
  std::vector<float> frozen_alpha_u;   // per block, spiking blocks only
  uint64_t canary_hash = 0;

  int num_classes() const { return static_cast<int>(blocks.back().out_shape[0]); }
};

/// Validates the arch and derives the block plan; throws naming the layer
/// index on incomposable shapes.
std::vector<BlockPlan> plan_blocks(const ArchSpec& arch);

/// Deterministic Kaiming-uniform (fan-in) initialization from the seed.
Network build_network(const ArchSpec& arch, uint64_t seed);

uint64_t weight_checksum(const Network& net);

/// Effective weights a block uses in the forward pass.
struct WeightView {
  Tensor effective;  // hidden binarized: signs; otherwise (standardized/quantized/raw) values
  Tensor alpha_w;    // per-channel scale when binarized, else empty
  bool binarized = false;
};
WeightView weight_view(const Network& net, int block);

/// Per-block membrane state across a window (post-reset for spiking blocks,
/// integrator value for the readout).
struct LayerStates {
  std::vector<Tensor> membrane;
};
LayerStates initial_states(const Network& net, int64_t batch);

/// Weighted op + channel scaling + pool/flatten chain for one block.
Tensor synaptic_input(const Network& net, int block, const Tensor& x);

struct StepOutput {
  Tensor logits;               // [B, classes]
  std::vector<Tensor> spikes;  // per spiking block
  std::vector<float> alpha_u;  // per block, the scale used this step
};
/// One time step: standardize/binarize -> synaptic input -> integrate ->
/// quantize -> fire -> reset per spiking block; leaky integration on the
/// readout. `input_t` is the [B, ...] frame for this step.
StepOutput forward_timestep(const Network& net, const Tensor& input_t, LayerStates& state);

struct WindowResult {
  std::vector<Tensor> logits_per_step;  // T entries of [B, classes]
  std::vector<Tensor> spike_records;    // per spiking block: [N_l, T], N_l = B * neurons
  std::vector<double> firing_rates;     // per spiking block
  std::vector<float> max_alpha_u;       // per block, max over steps (calibration)
};
/// Direct coding: the same input is presented at every step, states start at zero.
WindowResult forward_window(const Network& net, const Tensor& input_batch);

struct GraphWindow {
  std::vector<ad::NodePtr> logits_per_step;
  std::vector<ad::NodePtr> hidden_rates;   // f_l nodes for hidden blocks, in block order
  std::vector<Tensor> spike_records;       // detached diagnostics, per spiking block
  std::vector<ad::NodePtr> weight_leaves;  // per block, grads land here
};
GraphWindow forward_window_graph(const Network& net, const Tensor& input_batch);

struct OptimizerConfig {
  std::string name = "sgd";  // "sgd" | "adam"
  double lr = 0.1;
  double momentum = 0.9;
  bool cosine = true;  // cosine decay over the configured epochs
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
};

struct TrainReport {
  int epoch = 0;
  double ce_loss = 0.0, ls_loss = 0.0, accuracy = 0.0;
  std::vector<double> firing_rates;                // per spiking block
  std::vector<regulation::EntropyReport> stats;    // per block
};

struct non_finite_loss : std::runtime_error {
  int batch_index;
  explicit non_finite_loss(int idx)
      : std::runtime_error("non-finite loss at batch " + std::to_string(idx)),
        batch_index(idx) {}
};

class Trainer {
 public:
  Trainer(Network& net, OptimizerConfig opt, int total_epochs, double lambda);

  TrainReport train_epoch(const std::vector<data::LabelledBatch>& batches, int epoch_index);

  const std::vector<Tensor>& slots() const { return slots_; }
  std::vector<Tensor>& slots() { return slots_; }
  int64_t adam_steps() const { return adam_steps_; }
  void set_adam_steps(int64_t s) { adam_steps_ = s; }

 private:
  void apply_update(int epoch_index, const std::vector<ad::NodePtr>& leaves);

  Network& net_;
  OptimizerConfig opt_;
  int total_epochs_;
  double lambda_;
  std::vector<Tensor> slots_;  // sgd: velocity per weight; adam: m then v per weight
  int64_t adam_steps_ = 0;
};

/// Per-block sign/spike distribution snapshot from the current weights and a
/// window's spike records.
std::vector<regulation::EntropyReport> layer_stats(const Network& net,
                                                   const std::vector<Tensor>& spike_records);

double evaluate(const Network& net, const data::LabelledSet& set);

/// Deterministic calibration inputs derived from the arch digest.
Tensor canary_inputs(const Network& net, int64_t count = 8);

/// Fixes per-layer alpha_u from a canary calibration run, materializes the
/// quantized weight views and computes the parity hash. Requires 1-bit hidden
/// weights and k <= 8 membranes (the packed path's domain).
void freeze(Network& net);

}  // namespace qsnn::network
