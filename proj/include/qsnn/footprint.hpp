#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsnn/network.hpp"

namespace qsnn::footprint {

struct FootprintBreakdown {
  int64_t weight_bytes = 0;
  int64_t membrane_bytes = 0;
  double total_megabytes = 0.0;
  double reduction_vs_fp = 0.0;  // percent vs the same arch at 32w-32u

  int64_t total_bytes() const { return weight_bytes + membrane_bytes; }
};

/// Storage model: every weight at its layer-role bit width, one membrane per
/// neuron per batch element at k bits, scale factors at 32 bits each (one per
/// output channel for binarized layers, one per tensor/layer otherwise).
/// Biases do not exist in this engine.
FootprintBreakdown model_footprint(const network::ArchSpec& arch,
                                   const quantizer::QuantSpec& quant, int batch);

std::string footprint_text(const network::ArchSpec& arch, const quantizer::QuantSpec& quant,
                           const std::vector<int>& batches);
std::string footprint_json(const network::ArchSpec& arch, const quantizer::QuantSpec& quant,
                           const std::vector<int>& batches);

}  // namespace qsnn::footprint
