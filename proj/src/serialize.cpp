#include "qsnn/serialize.hpp"

#include <cstring>
#include <fstream>

namespace qsnn::serialize {

using nlohmann::json;
using namespace network;

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Linear: return "linear";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "conv2d") return LayerKind::Conv2d;
  if (s == "linear") return LayerKind::Linear;
  if (s == "avgpool") return LayerKind::AvgPool;
  if (s == "flatten") return LayerKind::Flatten;
  throw std::invalid_argument("arch: unknown layer kind '" + s + "'");
}

}  // namespace

json arch_to_json(const ArchSpec& arch) {
  json j;
  j["input"] = arch.input_shape;
  j["timesteps"] = arch.timesteps;
  j["standardize_hidden"] = arch.standardize_hidden;
  j["standardize_eps"] = arch.standardize_eps;
  j["lif"] = {{"tau", arch.lif.tau}, {"theta", arch.lif.theta}, {"beta", arch.lif.beta}};
  j["quant"] = {{"hidden_weight_bits", arch.quant.hidden_weight_bits},
                {"boundary_weight_bits", arch.quant.boundary_weight_bits},
                {"membrane_bits", arch.quant.membrane_bits}};
  json layers = json::array();
  for (const LayerDesc& d : arch.layers) {
    json l;
    l["kind"] = kind_name(d.kind);
    switch (d.kind) {
      case LayerKind::Conv2d:
        l["in_channels"] = d.in_channels;
        l["out_channels"] = d.out_channels;
        l["kernel"] = d.kernel;
        l["stride"] = d.stride;
        l["pad"] = d.pad;
        break;
      case LayerKind::Linear:
        l["in_features"] = d.in_features;
        l["out_features"] = d.out_features;
        break;
      case LayerKind::AvgPool:
        l["pool"] = d.pool;
        break;
      case LayerKind::Flatten:
        break;
    }
    layers.push_back(l);
  }
  j["layers"] = layers;
  return j;
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec arch;
  arch.input_shape = j.at("input").get<Shape>();
  arch.timesteps = j.at("timesteps").get<int>();
  arch.standardize_hidden = j.at("standardize_hidden").get<bool>();
  arch.standardize_eps = j.at("standardize_eps").get<float>();
  const json& lif = j.at("lif");
  arch.lif.tau = lif.at("tau").get<float>();
  arch.lif.theta = lif.at("theta").get<float>();
  arch.lif.beta = lif.at("beta").get<float>();
  const json& q = j.at("quant");
  arch.quant.hidden_weight_bits = q.at("hidden_weight_bits").get<int>();
  arch.quant.boundary_weight_bits = q.at("boundary_weight_bits").get<int>();
  arch.quant.membrane_bits = q.at("membrane_bits").get<int>();
  for (const json& l : j.at("layers")) {
    LayerDesc d;
    d.kind = kind_from_name(l.at("kind").get<std::string>());
    switch (d.kind) {
      case LayerKind::Conv2d:
        d.in_channels = l.at("in_channels").get<int>();
        d.out_channels = l.at("out_channels").get<int>();
        d.kernel = l.at("kernel").get<int>();
        d.stride = l.at("stride").get<int>();
        d.pad = l.at("pad").get<int>();
        break;
      case LayerKind::Linear:
        d.in_features = l.at("in_features").get<int>();
        d.out_features = l.at("out_features").get<int>();
        break;
      case LayerKind::AvgPool:
        d.pool = l.at("pool").get<int>();
        break;
      case LayerKind::Flatten:
        break;
    }
    arch.layers.push_back(d);
  }
  return arch;
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
  uint64_t h = seed;
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t arch_digest(const ArchSpec& arch) {
  std::string canon = arch_to_json(arch).dump();
  return fnv1a(canon.data(), canon.size());
}

namespace {

constexpr char kMagic[8] = {'Q', 'S', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

static_assert(__BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__,
              "checkpoint format is little-endian");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("checkpoint: truncated file " + path);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
  uint64_t len = read_pod<uint64_t>(in, path);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), static_cast<std::streamsize>(len)))
    throw std::runtime_error("checkpoint: truncated string in " + path);
  return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
  for (int64_t d : t.shape) write_pod<int64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

Tensor read_tensor(std::istream& in, const std::string& path) {
  uint32_t ndim = read_pod<uint32_t>(in, path);
  if (ndim > 8) throw std::runtime_error("checkpoint: corrupt tensor rank in " + path);
  Shape s;
  for (uint32_t i = 0; i < ndim; ++i) s.push_back(read_pod<int64_t>(in, path));
  Tensor t(s);
  if (!in.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float))))
    throw std::runtime_error("checkpoint: truncated tensor in " + path);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net, const std::string& extra_json,
                     int epoch, const std::string& optimizer, const std::vector<Tensor>& slots,
                     int64_t adam_steps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  write_pod<uint32_t>(out, kVersion);
  write_string(out, arch_to_json(net.arch).dump());
  write_string(out, extra_json);
  write_pod<uint32_t>(out, static_cast<uint32_t>(epoch));
  write_pod<uint32_t>(out, static_cast<uint32_t>(net.weights.size()));
  for (const Tensor& w : net.weights) write_tensor(out, w);
  write_string(out, optimizer);
  write_pod<uint32_t>(out, static_cast<uint32_t>(slots.size()));
  for (const Tensor& s : slots) write_tensor(out, s);
  write_pod<int64_t>(out, adam_steps);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = read_pod<uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) +
                             " unsupported, expected " + std::to_string(kVersion));
  std::string arch_str = read_string(in, path);
  Checkpoint ck;
  ArchSpec arch = arch_from_json(json::parse(arch_str));
  ck.extra_json = read_string(in, path);
  ck.epoch = static_cast<int>(read_pod<uint32_t>(in, path));
  uint32_t n_weights = read_pod<uint32_t>(in, path);
  ck.net = build_network(arch, 0);
  if (n_weights != ck.net.weights.size())
    throw std::runtime_error("checkpoint: " + std::to_string(n_weights) +
                             " weight tensors, arch expects " +
                             std::to_string(ck.net.weights.size()));
  for (uint32_t i = 0; i < n_weights; ++i) {
    Tensor w = read_tensor(in, path);
    if (w.shape != ck.net.weights[i].shape)
      throw std::runtime_error("checkpoint: weight " + std::to_string(i) + " shape " +
                               shape_str(w.shape) + " does not match arch " +
                               shape_str(ck.net.weights[i].shape));
    ck.net.weights[i] = std::move(w);
  }
  ck.optimizer = read_string(in, path);
  uint32_t n_slots = read_pod<uint32_t>(in, path);
  for (uint32_t i = 0; i < n_slots; ++i) ck.slots.push_back(read_tensor(in, path));
  ck.adam_steps = read_pod<int64_t>(in, path);
  return ck;
}

}  // namespace qsnn::serialize
