#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "contcal/calibration.hpp"
#include "contcal/config.hpp"
#include "contcal/metrics.hpp"
#include "contcal/model.hpp"
#include "contcal/strategies.hpp"

namespace contcal {

// A failure inside one seed, tagged with the module and phase that raised it.
class RunError : public std::runtime_error {
 public:
  RunError(std::uint64_t seed, std::string module, std::string phase, const std::string& what,
           bool config_error);

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& module() const noexcept { return module_; }
  const std::string& phase() const noexcept { return phase_; }
  bool config_error() const noexcept { return config_error_; }

 private:
  std::uint64_t seed_;
  std::string module_;
  std::string phase_;
  bool config_error_;
};

// Inputs shared read-only by every seed. Split MNIST pools are empty for the synthetic benchmark.
struct DataSource {
  LabeledDataset train_pool;
  LabeledDataset test_pool;
  std::vector<std::pair<std::string, std::string>> input_hashes;  // (path, blob sha1)
};

DataSource load_data_source(const ExperimentConfig& cfg);
Stream build_stream(const ExperimentConfig& cfg, const DataSource& data, std::uint64_t seed);

// Git blob object id: sha1("blob <size>\0" + bytes), lowercase hex.
std::string git_blob_sha1(std::span<const std::uint8_t> bytes);

struct RunRecord {
  std::uint64_t seed = 0;
  std::string strategy;
  std::string calibrator;
  int step = 0;
  std::string trained_experience;  // experience id, or "joint"
  std::string eval_target;         // experience id, or "stream"
  std::size_t n_examples = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double nll = 0.0;
  double wall_seconds = 0.0;  // train + calibrate time of this step
};

struct StepTiming {
  int step = 0;
  double train_seconds = 0.0;
  double calibrate_seconds = 0.0;
  double evaluate_seconds = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;
  std::vector<CalibrationReport> calibrations;
  std::vector<TrainReport> training;  // one per step
  std::vector<StepTiming> timing;
  StreamEvaluation final_eval;
  CalibratedModel model;
};

// Runs train -> calibrate -> rc_update -> evaluate over `stream`. Throws RunError.
SeedResult run_seed(const ExperimentConfig& cfg, const Stream& stream, std::uint64_t seed);

// results.csv, reliability_*.csv, calibration.csv, train_log.csv, timing.csv, meta.txt, model.ckpt
void write_seed_outputs(const ExperimentConfig& cfg, const DataSource& data,
                        const SeedResult& result, const std::filesystem::path& dir);

void write_results_csv(std::ostream& out, std::span<const RunRecord> records);
inline constexpr const char* kResultsHeader =
    "seed,strategy,calibrator,step,trained_experience,eval_target,n_examples,accuracy,ece,nll";

// Every seed of cfg.seeds into cfg.out_dir/seed_<S>/, up to `jobs` seeds at once.
// Returns 0 on success, 1 if any seed hit a config error, 2 for other failures.
int run_experiment(const ExperimentConfig& cfg, int jobs, std::ostream& log);

}  // namespace contcal
