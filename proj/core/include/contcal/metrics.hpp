#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "contcal/datastream.hpp"
#include "contcal/model.hpp"

namespace contcal {

double accuracy(std::span<const int> predicted, std::span<const int> labels);

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double sum_confidence = 0.0;
  double sum_correct = 0.0;

  double avg_confidence() const { return count ? sum_confidence / static_cast<double>(count) : 0.0; }
  double avg_accuracy() const { return count ? sum_correct / static_cast<double>(count) : 0.0; }
};

// K equal-width bins: bin 0 is [0, 1/K], bin b > 0 is (b/K, (b+1)/K], edges in double.
class ReliabilityDiagram {
 public:
  explicit ReliabilityDiagram(int n_bins = 10);

  // Index of the bin holding confidence c; throws DomainError outside [0, 1].
  std::size_t bin_of(double confidence) const;
  void add(double confidence, bool correct);
  // Bin-wise sum; both diagrams must have the same bin count.
  void merge(const ReliabilityDiagram& other);

  int n_bins() const noexcept { return static_cast<int>(bins_.size()); }
  std::size_t total() const noexcept;
  const std::vector<ReliabilityBin>& bins() const noexcept { return bins_; }

 private:
  std::vector<ReliabilityBin> bins_;
};

ReliabilityDiagram build_reliability(std::span<const double> confidences,
                                     std::span<const std::uint8_t> correct, int n_bins = 10);

struct EceBin {
  double avg_accuracy = 0.0;
  double avg_confidence = 0.0;
  double weight = 0.0;  // |I_b| / M
};

struct EceReport {
  double ece = 0.0;
  double percent = 0.0;
  std::size_t total = 0;
  std::vector<EceBin> bins;
};

// sum_b |I_b|/M * |acc_b - conf_b|. Throws UsageError when the diagram is empty.
EceReport ece(const ReliabilityDiagram& diagram);

// Mean -log softmax(logits)[label].
double mean_nll(const Matrix& logits, std::span<const int> labels);

struct Scores {
  std::size_t n = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double nll = 0.0;
  ReliabilityDiagram diagram;
};

Scores score(const ModelOutput& out, std::span<const int> labels, int n_bins = 10);

struct StreamEvaluation {
  std::vector<Scores> per_experience;
  Scores pooled;  // over the concatenation of every test set
};

StreamEvaluation evaluate_stream(const CalibratedModel& cm, const Stream& stream, int n_bins = 10);

// Header plus one row per bin: bin_lo,bin_hi,count,avg_confidence,avg_accuracy (6 decimals).
void write_reliability_csv(std::ostream& out, const ReliabilityDiagram& diagram);

}  // namespace contcal
