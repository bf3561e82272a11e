// qsnn: train / evaluate / freeze / footprint / diagnose for quantized
// spiking networks. One command per process; see README for file formats.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "qsnn/bitkernel.hpp"
#include "qsnn/config.hpp"
#include "qsnn/footprint.hpp"
#include "qsnn/network.hpp"
#include "qsnn/serialize.hpp"
#include "qsnn/threads.hpp"

namespace fs = std::filesystem;
using namespace qsnn;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNanLoss = 3;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct EvalStats {
  double accuracy = 0.0;
  std::vector<double> firing_rates;  // per spiking block
  std::vector<Tensor> spike_records;
  std::vector<regulation::EntropyReport> stats;
};

EvalStats eval_with_stats(const network::Network& net, const data::LabelledSet& set) {
  if (set.size() == 0) throw std::invalid_argument("eval: empty dataset");
  EvalStats out;
  out.accuracy = network::evaluate(net, set);
  int64_t probe = std::min<int64_t>(set.size(), 512);
  Shape s = set.inputs.shape;
  s[0] = probe;
  Tensor batch(s);
  std::copy_n(set.inputs.data.begin(), batch.numel(), batch.data.begin());
  network::WindowResult wr = network::forward_window(net, batch);
  out.firing_rates = wr.firing_rates;
  out.stats = network::layer_stats(net, wr.spike_records);
  out.spike_records = std::move(wr.spike_records);
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// Minimal static SVG plots for the diagnose reports.
std::string svg_bars(const std::vector<double>& values, const std::string& title,
                     const std::string& color) {
  const int w = 640, h = 360, margin = 50;
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  os << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
     << "</text>\n";
  os << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin / 2
     << "' y2='" << h - margin << "' stroke='black'/>\n";
  os << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << margin << "' y2='"
     << margin / 2 << "' stroke='black'/>\n";
  double plot_h = h - 1.5 * margin;
  double plot_w = w - 1.5 * margin;
  size_t n = values.size();
  double bw = plot_w / std::max<size_t>(n, 1);
  for (size_t i = 0; i < n; ++i) {
    double v = std::min(std::max(values[i], 0.0), 1.0);
    double bh = v * plot_h;
    os << "<rect x='" << margin + i * bw + 4 << "' y='" << (h - margin) - bh << "' width='"
       << bw - 8 << "' height='" << bh << "' fill='" << color << "'/>\n";
    os << "<text x='" << margin + i * bw + bw / 2 << "' y='" << h - margin + 16
       << "' text-anchor='middle' font-size='11'>L" << i + 1 << "</text>\n";
    os << "<text x='" << margin + i * bw + bw / 2 << "' y='" << (h - margin) - bh - 4
       << "' text-anchor='middle' font-size='10'>" << fmt(values[i]) << "</text>\n";
  }
  // reference line at 0.5
  double y05 = (h - margin) - 0.5 * plot_h;
  os << "<line x1='" << margin << "' y1='" << y05 << "' x2='" << w - margin / 2 << "' y2='" << y05
     << "' stroke='gray' stroke-dasharray='4'/>\n";
  os << "</svg>\n";
  return os.str();
}

std::string svg_histogram(const std::vector<float>& values, int bins, const std::string& title) {
  float lo = values[0], hi = values[0];
  for (float v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1.f;
  std::vector<int64_t> counts(static_cast<size_t>(bins), 0);
  for (float v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::min(std::max(b, 0), bins - 1);
    ++counts[static_cast<size_t>(b)];
  }
  int64_t peak = 1;
  for (int64_t c : counts) peak = std::max(peak, c);
  const int w = 640, h = 360, margin = 50;
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  os << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
     << "</text>\n";
  os << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin / 2
     << "' y2='" << h - margin << "' stroke='black'/>\n";
  double plot_h = h - 1.5 * margin;
  double plot_w = w - 1.5 * margin;
  double bw = plot_w / bins;
  for (int i = 0; i < bins; ++i) {
    double bh = static_cast<double>(counts[static_cast<size_t>(i)]) / peak * plot_h;
    os << "<rect x='" << margin + i * bw << "' y='" << (h - margin) - bh << "' width='"
       << bw - 1 << "' height='" << bh << "' fill='steelblue'/>\n";
  }
  os << "<text x='" << margin << "' y='" << h - margin + 16 << "' font-size='11'>" << fmt(lo)
     << "</text>\n";
  os << "<text x='" << w - margin / 2 << "' y='" << h - margin + 16
     << "' text-anchor='end' font-size='11'>" << fmt(hi) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

json stats_json(const std::vector<regulation::EntropyReport>& stats) {
  json pw = json::array(), ps = json::array(), hw = json::array(), hs = json::array();
  for (const auto& s : stats) {
    pw.push_back(s.p_w);
    ps.push_back(s.p_s);
    hw.push_back(s.entropy_w_nats);
    hs.push_back(s.entropy_s_nats);
  }
  return json{{"p_w", pw}, {"p_s", ps}, {"entropy_w_nats", hw}, {"entropy_s_nats", hs}};
}

int cmd_train(const std::string& config_path, const std::string& out_dir, int64_t seed_override) {
  config::ExperimentConfig cfg;
  config::DatasetPair ds;
  try {
    cfg = config::load_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    ds = config::load_dataset(cfg.dataset);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  fs::create_directories(out_dir);
  network::Network net = network::build_network(cfg.arch, cfg.seed);
  network::Trainer trainer(net, cfg.opt, cfg.epochs, cfg.lambda);

  std::ofstream csv(fs::path(out_dir) / "train_report.csv");
  bool header_written = false;
  network::TrainReport last;
  try {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      auto batches = data::make_batches(ds.train, cfg.batch_size,
                                        cfg.seed * 2654435761ull + static_cast<uint64_t>(epoch));
      last = trainer.train_epoch(batches, epoch);
      if (!header_written) {
        csv << "epoch,ce_loss,ls_loss,train_accuracy";
        for (size_t i = 0; i < last.firing_rates.size(); ++i) csv << ",fr_" << i;
        for (size_t i = 0; i < last.stats.size(); ++i)
          csv << ",p_w_" << i << ",p_s_" << i << ",H_w_" << i << ",H_s_" << i;
        csv << "\n";
        header_written = true;
      }
      csv << last.epoch << ',' << fmt(last.ce_loss) << ',' << fmt(last.ls_loss) << ','
          << fmt(last.accuracy);
      for (double r : last.firing_rates) csv << ',' << fmt(r);
      for (const auto& s : last.stats)
        csv << ',' << fmt(s.p_w) << ',' << fmt(s.p_s) << ',' << fmt(s.entropy_w_nats) << ','
            << fmt(s.entropy_s_nats);
      csv << "\n";
      std::cout << "epoch " << epoch << " ce " << fmt(last.ce_loss) << " ls " << fmt(last.ls_loss)
                << " train_acc " << fmt(last.accuracy) << "\n";
    }
  } catch (const network::non_finite_loss& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitNanLoss;
  }
  double test_acc = network::evaluate(net, ds.test);

  std::string cfg_json = config::config_to_json(cfg).dump();
  serialize::save_checkpoint((fs::path(out_dir) / "checkpoint.qsnnckpt").string(), net, cfg_json,
                             cfg.epochs, cfg.opt.name, trainer.slots(), trainer.adam_steps());
  json metrics;
  metrics["config"] = config::config_to_json(cfg);
  metrics["final"] = {{"epoch", last.epoch},
                      {"ce_loss", last.ce_loss},
                      {"ls_loss", last.ls_loss},
                      {"train_accuracy", last.accuracy},
                      {"test_accuracy", test_acc},
                      {"firing_rates", last.firing_rates},
                      {"layers", stats_json(last.stats)}};
  write_file(fs::path(out_dir) / "metrics.json", metrics.dump(2) + "\n");
  std::cout << "test_accuracy " << fmt(test_acc) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_arg) {
  serialize::Checkpoint ck = serialize::load_checkpoint(ckpt_path);
  data::LabelledSet set = config::load_eval_data(data_arg);
  EvalStats st = eval_with_stats(ck.net, set);
  std::printf("accuracy %.4f\n", st.accuracy);
  json j;
  j["accuracy"] = st.accuracy;
  j["firing_rates"] = st.firing_rates;
  j["layers"] = stats_json(st.stats);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_freeze(const std::string& ckpt_path, const std::string& out_path) {
  serialize::Checkpoint ck = serialize::load_checkpoint(ckpt_path);
  network::freeze(ck.net);
  bitkernel::save_frozen(ck.net, out_path);
  std::printf("frozen model written to %s (canary %016llx)\n", out_path.c_str(),
              static_cast<unsigned long long>(ck.net.canary_hash));
  return 0;
}

int cmd_footprint(const std::string& config_path, std::vector<int> batches) {
  config::ExperimentConfig cfg;
  try {
    cfg = config::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (batches.empty()) batches = {1, 64, 256};
  std::cout << footprint::footprint_text(cfg.arch, cfg.arch.quant, batches);
  std::cout << footprint::footprint_json(cfg.arch, cfg.arch.quant, batches) << "\n";
  return 0;
}

int cmd_diagnose(const std::string& ckpt_path, const std::string& data_arg,
                 const std::string& out_dir) {
  serialize::Checkpoint ck = serialize::load_checkpoint(ckpt_path);
  data::LabelledSet set = config::load_eval_data(data_arg);
  if (set.size() == 0) throw std::invalid_argument("diagnose: empty sample");
  fs::create_directories(out_dir);
  EvalStats st = eval_with_stats(ck.net, set);

  std::ostringstream csv;
  csv << "layer,role,p_w,p_s,entropy_w_nats,entropy_s_nats\n";
  for (size_t i = 0; i < st.stats.size(); ++i) {
    const auto& b = ck.net.blocks[i];
    csv << i << ',' << (b.role == network::Role::Hidden ? "hidden" : "boundary") << ','
        << fmt(st.stats[i].p_w) << ',' << fmt(st.stats[i].p_s) << ','
        << fmt(st.stats[i].entropy_w_nats) << ',' << fmt(st.stats[i].entropy_s_nats) << "\n";
  }
  write_file(fs::path(out_dir) / "diagnose.csv", csv.str());

  std::vector<double> pw, ps;
  for (const auto& s : st.stats) pw.push_back(s.p_w);
  for (size_t i = 0; i < ck.net.blocks.size(); ++i)
    if (ck.net.blocks[i].spiking()) ps.push_back(st.stats[i].p_s);
  write_file(fs::path(out_dir) / "weight_sign_probability.svg",
             svg_bars(pw, "P(weight sign = +1) per layer", "darkorange"));
  write_file(fs::path(out_dir) / "spike_probability.svg",
             svg_bars(ps, "P(spike = 1) per spiking layer", "steelblue"));
  for (size_t i = 0; i < ck.net.blocks.size(); ++i) {
    network::WeightView view = network::weight_view(ck.net, static_cast<int>(i));
    // For binarized layers show the pre-sign (standardized) latent distribution.
    Tensor shown = view.binarized
                       ? (ck.net.arch.standardize_hidden
                              ? regulation::standardize_weights(ck.net.weights[i],
                                                                ck.net.arch.standardize_eps)
                              : ck.net.weights[i])
                       : view.effective;
    write_file(fs::path(out_dir) / ("weights_hist_layer" + std::to_string(i) + ".svg"),
               svg_histogram(shown.data, 40, "layer " + std::to_string(i) + " weights"));
  }
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  CLI::App app{"quantized spiking network engine"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a network from a config");
  std::string train_config, train_out;
  int64_t train_seed = -1;
  train->add_option("--config", train_config, "experiment config JSON")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--seed", train_seed, "override the config seed");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset descriptor / csv / synth:<kind>:<n>:<seed>")
      ->required();

  auto* freeze = app.add_subcommand("freeze", "pack a checkpoint for bitwise inference");
  std::string freeze_ckpt, freeze_out;
  freeze->add_option("--ckpt", freeze_ckpt, "checkpoint path")->required();
  freeze->add_option("--out", freeze_out, "frozen model output path")->required();

  auto* footprint_cmd = app.add_subcommand("footprint", "memory footprint report");
  std::string fp_config;
  std::vector<int> fp_batches;
  footprint_cmd->add_option("--config", fp_config, "experiment config JSON")->required();
  footprint_cmd->add_option("--batch", fp_batches, "batch size (repeatable)");

  auto* diagnose = app.add_subcommand("diagnose", "weight/spike distribution report");
  std::string diag_ckpt, diag_data, diag_out;
  diagnose->add_option("--ckpt", diag_ckpt, "checkpoint path")->required();
  diagnose->add_option("--data", diag_data, "dataset descriptor / csv / synth:<kind>:<n>:<seed>")
      ->required();
  diagnose->add_option("--out", diag_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_config, train_out, train_seed);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data);
    if (freeze->parsed()) return cmd_freeze(freeze_ckpt, freeze_out);
    if (footprint_cmd->parsed()) return cmd_footprint(fp_config, fp_batches);
    if (diagnose->parsed()) return cmd_diagnose(diag_ckpt, diag_data, diag_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
