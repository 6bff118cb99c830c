#pragma once

// Experiment configuration, read from a JSON document. Every key is optional and
// defaults to the Split MNIST setting; unknown keys are rejected.
//
//   {
//     "benchmark": "split_mnist" | "synthetic",
//     "seeds": [0, 1, 2],
//     "out_dir": "out/run",
//     "strategy":   { "kind": "naive"|"replay"|"derpp"|"joint", "alpha": 0.3, "beta": 0.8,
//                     "memory_size": 2000, "epochs": 20, "batch_size": 32, "lr": 0.001,
//                     "optimizer": "sgd"|"adam" },
//     "calibrator": { "kind": "none"|"ts"|"vs"|"ms"|"hr", "lr": 0.01, "iterations": 100,
//                     "hr_lambda": <per strategy>, "rc_enabled": false,
//                     "rc_capacity": <strategy.memory_size> },
//     "model":      { "hidden_dim": 256 },
//     "data":       { "mnist_dir": "data/mnist",
//                     "paths": { "train_images": ..., "train_labels": ...,
//                                "test_images": ..., "test_labels": ... },
//                     "val_fraction": 0.2, "class_order": [0, ..., 9], "n_experiences": 5 },
//     "synthetic":  { "n_classes": 10, "dim": 20, "n_train_per_class": 200,
//                     "n_val_per_class": 50, "n_test_per_class": 100,
//                     "class_means_scale": 4.0, "n_experiences": 5 }
//   }
//
// Relative paths resolve against the directory of the config file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "contcal/calibration.hpp"
#include "contcal/datastream.hpp"
#include "contcal/strategies.hpp"

namespace contcal {

enum class Benchmark { SplitMnist, Synthetic };

std::string to_string(Benchmark b);
Benchmark parse_benchmark(const std::string& s);
std::vector<std::string> list_benchmarks();

struct MnistPaths {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;

  static MnistPaths in_directory(const std::filesystem::path& dir);
};

struct DataConfig {
  MnistPaths paths = MnistPaths::in_directory("data/mnist");
  double val_fraction = 0.2;
  std::vector<int> class_order;  // empty: ascending
  int n_experiences = 5;
};

struct ExperimentConfig {
  Benchmark benchmark = Benchmark::SplitMnist;
  StrategyConfig strategy;
  CalibratorConfig calibrator;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path out_dir = "out";
  std::size_t hidden_dim = 256;
  DataConfig data;
  SyntheticStreamSpec synthetic;

  // Throws ConfigError. With check_paths, input files must exist.
  void validate(bool check_paths = true) const;
};

ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON echo of every resolved value (sorted keys, 2-space indent).
std::string to_json_text(const ExperimentConfig& cfg);

}  // namespace contcal
