#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "contcal/datastream.hpp"
#include "contcal/model.hpp"
#include "contcal/strategies.hpp"

namespace contcal {

enum class CalibratorKind { None, TS, VS, MS, HR };

std::string to_string(CalibratorKind k);
CalibratorKind parse_calibrator_kind(const std::string& s);

struct CalibratorConfig {
  CalibratorKind kind = CalibratorKind::None;
  double lr = 0.01;
  int iterations = 100;
  double hr_lambda = 0.0;
  bool rc_enabled = false;
  std::size_t rc_capacity = 2000;

  bool post_processing() const {
    return kind == CalibratorKind::TS || kind == CalibratorKind::VS || kind == CalibratorKind::MS;
  }
  // "none", "ts", "ms+rc", ...
  std::string label() const;
  void validate() const;
};

// Split MNIST entropy-regularization strength for each strategy.
double default_hr_lambda(StrategyKind strategy);

struct CalibrationSet {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<int> provenance;  // experience id of each example

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
};

// Reservoir over validation examples only (no stored logits).
class RcBuffer {
 public:
  RcBuffer(std::size_t capacity, std::uint64_t seed) : buffer_(capacity, seed) {}

  const ReservoirBuffer& reservoir() const noexcept { return buffer_; }
  std::size_t size() const noexcept { return buffer_.size(); }

 private:
  friend void rc_update(RcBuffer& buf, const LabeledDataset& val, int experience_id);
  ReservoirBuffer buffer_;
};

// Offers every example of `val` to the reservoir once, in dataset order.
// Throws ProvenanceError unless `val` is a validation split.
void rc_update(RcBuffer& buf, const LabeledDataset& val, int experience_id);

struct FitResult {
  bool skipped = false;
  double initial_nll = 0.0;
  double final_nll = 0.0;
  std::size_t clamps = 0;
};

// Full-batch gradient descent on NLL(softmax(z / T), y) over cached base logits.
// An Identity head is promoted to T = 1; an existing temperature is refined.
FitResult fit_temperature(CalibratedModel& cm, const CalibrationSet& cal, double lr,
                          int iterations);

// Full-batch gradient descent on NLL(softmax(W z + b), y) over cached base logits.
// An Identity head is promoted to W = I, b = 0.
FitResult fit_affine(CalibratedModel& cm, const CalibrationSet& cal, double lr, int iterations,
                     bool diagonal_only);

struct CalibrationReport {
  int experience = 0;
  CalibratorKind kind = CalibratorKind::None;
  bool rc = false;
  bool skipped = true;
  std::size_t n_examples = 0;
  std::size_t buffer_size = 0;
  double pre_nll = 0.0;
  double post_nll = 0.0;
  double pre_ece = 0.0;
  double post_ece = 0.0;
  double fitted = 0.0;  // T for TS, ||W - I||_F for VS/MS, 0 otherwise
};

// Calibration set = exp.val plus the whole RC buffer (when enabled), then fit per kind.
// The fitted head stays on `cm`. None and HR perform no fitting.
CalibrationReport calibrate_after_experience(CalibratedModel& cm, const Experience& exp,
                                             const RcBuffer* buffer, const CalibratorConfig& cfg);

}  // namespace contcal
