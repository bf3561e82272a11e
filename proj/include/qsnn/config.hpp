#pragma once

#include <string>

#include <json.hpp>

#include "qsnn/data.hpp"
#include "qsnn/network.hpp"

namespace qsnn::config {

/// Dataset source: synthetic generator or files.
struct DatasetConfig {
  std::string type = "synth";  // "synth" | "idx" | "csv"
  // synth
  std::string kind = "striped-images";
  int64_t n_train = 1000, n_test = 200;
  uint64_t seed = 7;
  float noise = 0.15f;
  int height = 28, width = 28;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  // csv
  std::string train_csv, test_csv;
};

/// A run is reproducible from (config, seed) alone.
struct ExperimentConfig {
  network::ArchSpec arch;          // includes lif, quant, timesteps
  network::OptimizerConfig opt;
  DatasetConfig dataset;
  double lambda = 1e-3;
  int epochs = 1;
  int batch_size = 64;
  uint64_t seed = 1;
};

/// Strict parse: unknown keys anywhere are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

struct DatasetPair {
  data::LabelledSet train;
  data::LabelledSet test;
};
DatasetPair load_dataset(const DatasetConfig& d);

/// "--data" argument: a dataset descriptor JSON file, a .csv path, or the
/// shorthand synth:<kind>:<n>:<seed>.
data::LabelledSet load_eval_data(const std::string& arg);

}  // namespace qsnn::config
