#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsnn/network.hpp"
#include "qsnn/tensor.hpp"

namespace qsnn::bitkernel {

/// Sign bits of binarized weights packed lsb-first into 64-bit words,
/// row-major per output channel (bit = 1 <=> sign = +1). Padding bits past
/// fan_in are zero.
struct PackedBinaryTensor {
  int64_t rows = 0, fan_in = 0, words_per_row = 0;
  std::vector<uint64_t> words;
  Tensor alpha_w;  // [rows], optional channel scales carried with the signs
};

inline int64_t words_for_bits(int64_t bits) { return (bits + 63) / 64; }

/// signs is [rows, fan_in] over {-1,+1}; throws on any other value.
PackedBinaryTensor pack_signs(const Tensor& signs);
Tensor unpack_signs(const PackedBinaryTensor& packed);

/// Packs a {0,1} float vector lsb-first; padding zeroed.
void pack_bits(const float* src, int64_t n, uint64_t* dst);

/// sum_j sign(w_j) * s_j for one channel row: 2*popcount(w & s) - popcount(s).
int64_t accumulate_row(const uint64_t* w_row, const uint64_t* s_row, int64_t words,
                       int64_t spike_popcount);

/// All channels against one packed spike vector of length fan_in.
std::vector<int64_t> masked_sign_accumulate(const PackedBinaryTensor& weights,
                                            const std::vector<uint64_t>& spikes, int64_t fan_in);

/// Bit-packed inference over the window: hidden-layer synaptic sums via
/// AND+popcount, membranes kept as integer grid indices between steps.
/// Requires a frozen network; spike trains match the float reference exactly
/// and logits match within float round-off.
network::WindowResult infer_window_packed(const network::Network& net, const Tensor& input_batch);

/// Frozen-model container, little-endian:
///   "QSNN" magic, version u32, QuantSpec (3 x u32), arch digest u64,
///   arch JSON (u64 length + bytes), canary hash u64, layer count u32, then
///   per weighted layer: role u8, out_channels u32, fan_in u32, alpha_u f32,
///   hidden: alpha_w f32[OC] + sign bits as one contiguous lsb-first stream
///   of OC*fan_in bits; boundary: per-tensor scale f32 + int8 codes (value =
///   scale * code / 127).
void save_frozen(const network::Network& net, const std::string& path);
network::Network load_frozen(const std::string& path);

}  // namespace qsnn::bitkernel
