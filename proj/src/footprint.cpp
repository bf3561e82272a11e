#include "qsnn/footprint.hpp"

#include <sstream>

#include <json.hpp>

namespace qsnn::footprint {

using namespace network;

namespace {

struct Sums {
  int64_t weight_bits = 0;
  int64_t scale_count = 0;
  int64_t neurons = 0;
};

Sums tally(const ArchSpec& arch, const quantizer::QuantSpec& quant) {
  Sums s;
  for (const BlockPlan& b : plan_blocks(arch)) {
    int64_t params = b.out_channels * b.fan_in;
    int bits;
    if (b.role == Role::Hidden) {
      bits = quant.hidden_weight_bits;
      if (bits == 1) s.scale_count += b.out_channels;  // channel-wise alpha_w
    } else {
      bits = quant.boundary_weight_bits;
      if (bits != 32) s.scale_count += 1;  // per-tensor scale
    }
    s.weight_bits += params * bits;
    s.neurons += shape_numel(b.out_shape);
    if (quant.membrane_quantized() && b.spiking()) s.scale_count += 1;  // alpha_u
  }
  return s;
}

int64_t bits_to_bytes(int64_t bits) { return (bits + 7) / 8; }

}  // namespace

FootprintBreakdown model_footprint(const ArchSpec& arch, const quantizer::QuantSpec& quant,
                                   int batch) {
  if (batch < 1) throw std::invalid_argument("model_footprint: batch must be >= 1");
  quant.validate();
  Sums s = tally(arch, quant);
  FootprintBreakdown out;
  out.weight_bytes = bits_to_bytes(s.weight_bits) + 4 * s.scale_count;
  out.membrane_bytes =
      bits_to_bytes(s.neurons * static_cast<int64_t>(batch) * quant.membrane_bits);
  out.total_megabytes = static_cast<double>(out.total_bytes()) / (1024.0 * 1024.0);

  quantizer::QuantSpec fp;
  fp.hidden_weight_bits = 32;
  fp.boundary_weight_bits = 32;
  fp.membrane_bits = 32;
  Sums sfp = tally(arch, fp);
  int64_t fp_total = bits_to_bytes(sfp.weight_bits) +
                     bits_to_bytes(sfp.neurons * static_cast<int64_t>(batch) * 32);
  out.reduction_vs_fp = 100.0 * (1.0 - static_cast<double>(out.total_bytes()) /
                                           static_cast<double>(fp_total));
  return out;
}

std::string footprint_text(const ArchSpec& arch, const quantizer::QuantSpec& quant,
                           const std::vector<int>& batches) {
  std::ostringstream os;
  os << "bit width: " << quant.hidden_weight_bits << "w-" << quant.membrane_bits << "u"
     << " (boundary " << quant.boundary_weight_bits << "w)\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%8s %14s %16s %12s %12s\n", "batch", "weight_bytes",
                "membrane_bytes", "total_MB", "vs fp32");
  os << line;
  for (int b : batches) {
    FootprintBreakdown f = model_footprint(arch, quant, b);
    std::snprintf(line, sizeof(line), "%8d %14lld %16lld %12.4f %11.2f%%\n", b,
                  static_cast<long long>(f.weight_bytes),
                  static_cast<long long>(f.membrane_bytes), f.total_megabytes,
                  -f.reduction_vs_fp);
    os << line;
  }
  return os.str();
}

std::string footprint_json(const ArchSpec& arch, const quantizer::QuantSpec& quant,
                           const std::vector<int>& batches) {
  nlohmann::json j;
  j["bit_width"] = std::to_string(quant.hidden_weight_bits) + "w-" +
                   std::to_string(quant.membrane_bits) + "u";
  j["boundary_weight_bits"] = quant.boundary_weight_bits;
  nlohmann::json rows = nlohmann::json::array();
  for (int b : batches) {
    FootprintBreakdown f = model_footprint(arch, quant, b);
    rows.push_back({{"batch", b},
                    {"weight_bytes", f.weight_bytes},
                    {"membrane_bytes", f.membrane_bytes},
                    {"total_megabytes", f.total_megabytes},
                    {"reduction_vs_fp_percent", f.reduction_vs_fp}});
  }
  j["rows"] = rows;
  return j.dump(2);
}

}  // namespace qsnn::footprint
