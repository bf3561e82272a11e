#include "qsnn/config.hpp"

#include <fstream>
#include <set>

#include "qsnn/serialize.hpp"

namespace qsnn::config {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

void require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw std::invalid_argument("config: missing key '" + std::string(key) + "' in " + where);
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j,
                 {"arch", "optimizer", "dataset", "lambda", "epochs", "batch_size", "seed"},
                 "config");
  ExperimentConfig c;
  require(j, "arch", "config");
  const json& a = j.at("arch");
  reject_unknown(a,
                 {"preset", "input", "layers", "lif", "quant", "timesteps",
                  "standardize_hidden", "standardize_eps"},
                 "arch");
  if (a.contains("preset")) {
    std::string preset = a.at("preset").get<std::string>();
    if (preset == "desk-mlp")
      c.arch = network::ArchSpec::desk_mlp();
    else if (preset == "desk-cnn")
      c.arch = network::ArchSpec::desk_cnn();
    else
      throw std::invalid_argument("config: unknown arch preset '" + preset + "'");
    if (a.contains("input") || a.contains("layers"))
      throw std::invalid_argument("config: preset and explicit layers are mutually exclusive");
  } else {
    require(a, "input", "arch");
    require(a, "layers", "arch");
    json full = a;
    full.erase("preset");
    // arch_from_json expects the complete record; fill defaults first
    network::ArchSpec defaults;
    if (!full.contains("timesteps")) full["timesteps"] = defaults.timesteps;
    if (!full.contains("standardize_hidden"))
      full["standardize_hidden"] = defaults.standardize_hidden;
    if (!full.contains("standardize_eps")) full["standardize_eps"] = defaults.standardize_eps;
    if (!full.contains("lif"))
      full["lif"] = {{"tau", defaults.lif.tau}, {"theta", defaults.lif.theta},
                     {"beta", defaults.lif.beta}};
    if (!full.contains("quant"))
      full["quant"] = {{"hidden_weight_bits", defaults.quant.hidden_weight_bits},
                       {"boundary_weight_bits", defaults.quant.boundary_weight_bits},
                       {"membrane_bits", defaults.quant.membrane_bits}};
    c.arch = serialize::arch_from_json(full);
  }
  // overrides usable with presets
  if (a.contains("timesteps")) c.arch.timesteps = a.at("timesteps").get<int>();
  if (a.contains("standardize_hidden"))
    c.arch.standardize_hidden = a.at("standardize_hidden").get<bool>();
  if (a.contains("standardize_eps")) c.arch.standardize_eps = a.at("standardize_eps").get<float>();
  if (a.contains("lif")) {
    const json& lif = a.at("lif");
    reject_unknown(lif, {"tau", "theta", "beta"}, "arch.lif");
    if (lif.contains("tau")) c.arch.lif.tau = lif.at("tau").get<float>();
    if (lif.contains("theta")) c.arch.lif.theta = lif.at("theta").get<float>();
    if (lif.contains("beta")) c.arch.lif.beta = lif.at("beta").get<float>();
  }
  if (a.contains("quant")) {
    const json& q = a.at("quant");
    reject_unknown(q, {"hidden_weight_bits", "boundary_weight_bits", "membrane_bits"},
                   "arch.quant");
    if (q.contains("hidden_weight_bits"))
      c.arch.quant.hidden_weight_bits = q.at("hidden_weight_bits").get<int>();
    if (q.contains("boundary_weight_bits"))
      c.arch.quant.boundary_weight_bits = q.at("boundary_weight_bits").get<int>();
    if (q.contains("membrane_bits")) c.arch.quant.membrane_bits = q.at("membrane_bits").get<int>();
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, {"name", "lr", "momentum", "schedule"}, "optimizer");
    if (o.contains("name")) c.opt.name = o.at("name").get<std::string>();
    if (o.contains("lr")) c.opt.lr = o.at("lr").get<double>();
    if (o.contains("momentum")) c.opt.momentum = o.at("momentum").get<double>();
    if (o.contains("schedule")) {
      std::string s = o.at("schedule").get<std::string>();
      if (s == "cosine")
        c.opt.cosine = true;
      else if (s == "constant")
        c.opt.cosine = false;
      else
        throw std::invalid_argument("config: unknown schedule '" + s + "'");
    }
  }

  require(j, "dataset", "config");
  const json& d = j.at("dataset");
  reject_unknown(d,
                 {"type", "kind", "n_train", "n_test", "seed", "noise", "height", "width",
                  "train_images", "train_labels", "test_images", "test_labels", "train_csv",
                  "test_csv"},
                 "dataset");
  require(d, "type", "dataset");
  c.dataset.type = d.at("type").get<std::string>();
  if (c.dataset.type == "synth") {
    require(d, "kind", "dataset");
    c.dataset.kind = d.at("kind").get<std::string>();
    data::synth_kind_from_string(c.dataset.kind);  // validates
    if (d.contains("n_train")) c.dataset.n_train = d.at("n_train").get<int64_t>();
    if (d.contains("n_test")) c.dataset.n_test = d.at("n_test").get<int64_t>();
    if (d.contains("seed")) c.dataset.seed = d.at("seed").get<uint64_t>();
    if (d.contains("noise")) c.dataset.noise = d.at("noise").get<float>();
    if (d.contains("height")) c.dataset.height = d.at("height").get<int>();
    if (d.contains("width")) c.dataset.width = d.at("width").get<int>();
  } else if (c.dataset.type == "idx") {
    for (const char* k : {"train_images", "train_labels", "test_images", "test_labels"})
      require(d, k, "dataset");
    c.dataset.train_images = d.at("train_images").get<std::string>();
    c.dataset.train_labels = d.at("train_labels").get<std::string>();
    c.dataset.test_images = d.at("test_images").get<std::string>();
    c.dataset.test_labels = d.at("test_labels").get<std::string>();
  } else if (c.dataset.type == "csv") {
    require(d, "train_csv", "dataset");
    require(d, "test_csv", "dataset");
    c.dataset.train_csv = d.at("train_csv").get<std::string>();
    c.dataset.test_csv = d.at("test_csv").get<std::string>();
  } else {
    throw std::invalid_argument("config: unknown dataset type '" + c.dataset.type + "'");
  }

  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  if (c.lambda < 0) throw std::invalid_argument("config: lambda must be >= 0");
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (c.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (c.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();

  network::plan_blocks(c.arch);  // validate shapes now
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["arch"] = serialize::arch_to_json(c.arch);
  j["optimizer"] = {{"name", c.opt.name},
                    {"lr", c.opt.lr},
                    {"momentum", c.opt.momentum},
                    {"schedule", c.opt.cosine ? "cosine" : "constant"}};
  json d;
  d["type"] = c.dataset.type;
  if (c.dataset.type == "synth") {
    d["kind"] = c.dataset.kind;
    d["n_train"] = c.dataset.n_train;
    d["n_test"] = c.dataset.n_test;
    d["seed"] = c.dataset.seed;
    d["noise"] = c.dataset.noise;
    d["height"] = c.dataset.height;
    d["width"] = c.dataset.width;
  } else if (c.dataset.type == "idx") {
    d["train_images"] = c.dataset.train_images;
    d["train_labels"] = c.dataset.train_labels;
    d["test_images"] = c.dataset.test_images;
    d["test_labels"] = c.dataset.test_labels;
  } else {
    d["train_csv"] = c.dataset.train_csv;
    d["test_csv"] = c.dataset.test_csv;
  }
  j["dataset"] = d;
  j["lambda"] = c.lambda;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

DatasetPair load_dataset(const DatasetConfig& d) {
  DatasetPair pair;
  if (d.type == "synth") {
    data::SynthOptions opts;
    opts.noise = d.noise;
    opts.height = d.height;
    opts.width = d.width;
    data::SynthKind kind = data::synth_kind_from_string(d.kind);
    pair.train = data::synth_task(kind, d.n_train, d.seed, opts);
    pair.test = data::synth_task(kind, d.n_test, d.seed + 1, opts);
  } else if (d.type == "idx") {
    pair.train = data::load_idx_pair(d.train_images, d.train_labels);
    pair.test = data::load_idx_pair(d.test_images, d.test_labels);
  } else {
    pair.train = data::load_csv(d.train_csv);
    pair.test = data::load_csv(d.test_csv);
  }
  int classes = std::max(pair.train.num_classes, pair.test.num_classes);
  pair.train.num_classes = classes;
  pair.test.num_classes = classes;
  return pair;
}

data::LabelledSet load_eval_data(const std::string& arg) {
  if (arg.rfind("synth:", 0) == 0) {
    std::string rest = arg.substr(6);
    size_t p1 = rest.find(':');
    size_t p2 = rest.find(':', p1 == std::string::npos ? p1 : p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
      throw std::invalid_argument("data: expected synth:<kind>:<n>:<seed>, got " + arg);
    std::string kind = rest.substr(0, p1);
    int64_t n = std::stoll(rest.substr(p1 + 1, p2 - p1 - 1));
    uint64_t seed = std::stoull(rest.substr(p2 + 1));
    return data::synth_task(data::synth_kind_from_string(kind), n, seed);
  }
  if (arg.size() > 4 && arg.substr(arg.size() - 4) == ".csv") return data::load_csv(arg);
  // descriptor JSON file
  std::ifstream in(arg);
  if (!in) throw std::invalid_argument("data: cannot open " + arg);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("data: parse error in " + arg + ": " + e.what());
  }
  DatasetConfig d;
  d.type = j.at("type").get<std::string>();
  if (d.type == "synth") {
    d.kind = j.at("kind").get<std::string>();
    d.n_train = j.value("n", int64_t{1000});
    d.seed = j.value("seed", uint64_t{0});
    if (j.contains("noise")) d.noise = j.at("noise").get<float>();
    if (j.contains("height")) d.height = j.at("height").get<int>();
    if (j.contains("width")) d.width = j.at("width").get<int>();
    data::SynthOptions opts;
    opts.noise = d.noise;
    opts.height = d.height;
    opts.width = d.width;
    return data::synth_task(data::synth_kind_from_string(d.kind), d.n_train, d.seed, opts);
  }
  if (d.type == "idx")
    return data::load_idx_pair(j.at("images").get<std::string>(),
                               j.at("labels").get<std::string>());
  if (d.type == "csv") return data::load_csv(j.at("path").get<std::string>());
  throw std::invalid_argument("data: unknown dataset type '" + d.type + "' in " + arg);
}

}  // namespace qsnn::config
