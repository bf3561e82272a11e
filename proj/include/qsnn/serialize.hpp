#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "qsnn/network.hpp"

namespace qsnn::serialize {

nlohmann::json arch_to_json(const network::ArchSpec& arch);
network::ArchSpec arch_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical (sorted-key, minified) arch JSON.
uint64_t arch_digest(const network::ArchSpec& arch);
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);

/// Versioned little-endian checkpoint container:
///   magic "QSNNCKPT", version u32, arch json (u64 length + bytes),
///   extra json (u64 length + bytes, opaque to this module), epoch u32,
///   latent weight tensors, optimizer name + slot tensors, adam step counter.
/// Each tensor is ndim u32, dims i64[], f32 payload.
struct Checkpoint {
  network::Network net;
  std::string extra_json;
  int epoch = 0;
  std::string optimizer;            // "sgd" | "adam" | "none"
  std::vector<Tensor> slots;
  int64_t adam_steps = 0;
};

void save_checkpoint(const std::string& path, const network::Network& net,
                     const std::string& extra_json, int epoch, const std::string& optimizer,
                     const std::vector<Tensor>& slots, int64_t adam_steps);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace qsnn::serialize
