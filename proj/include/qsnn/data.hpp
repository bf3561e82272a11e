#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsnn/tensor.hpp"

namespace qsnn::data {

/// Inputs scaled to [0,1] with integer class labels.
struct LabelledSet {
  Tensor inputs;  // [N, ...]
  std::vector<int> labels;
  int num_classes = 0;

  int64_t size() const { return inputs.numel() ? inputs.shape[0] : 0; }
  void validate() const;
};

struct LabelledBatch {
  Tensor inputs;  // [B, ...]
  std::vector<int> labels;
};

/// Seed-determined permutation into fixed-size batches (last batch may be short).
std::vector<LabelledBatch> make_batches(const LabelledSet& set, int batch_size, uint64_t seed);
LabelledBatch take_all(const LabelledSet& set);

/// Big-endian IDX files. Supports magic 0x00000803 (u8 images [n,rows,cols])
/// and 0x00000801 (u8 labels [n]). Pixels are scaled by 1/255.
Tensor load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);
/// Images as [N, 1, H, W] plus labels; class count inferred from labels.
LabelledSet load_idx_pair(const std::string& images_path, const std::string& labels_path);
void save_idx_images(const std::string& path, const Tensor& images);  // [N,H,W], values [0,1]
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

/// CSV with header "label,f0,f1,...", one sample per row, features in [0,1].
LabelledSet load_csv(const std::string& path);

enum class SynthKind { TwoGaussians, XorPatterns, StripedImages };
SynthKind synth_kind_from_string(const std::string& name);

struct SynthOptions {
  int64_t n = 1000;
  uint64_t seed = 0;
  // striped-images geometry
  int height = 28, width = 28;
  float noise = 0.15f;
};

/// Deterministic per seed. two-gaussians: 2 features, classes split 4 sigma
/// apart along the first feature (Bayes accuracy ~0.9772). xor-patterns: 2
/// features, XOR parity tiled over a 16x16 cluster grid (linearly
/// unclassifiable beyond ~53%). striped-images: [n,1,H,W] sinusoid gratings,
/// 10 classes = 5 orientations x 2 spatial frequencies, random phase per
/// sample.
LabelledSet synth_task(SynthKind kind, int64_t n, uint64_t seed, const SynthOptions& opts = {});

}  // namespace qsnn::data
