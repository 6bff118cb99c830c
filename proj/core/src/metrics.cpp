#include "contcal/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "contcal/errors.hpp"

namespace contcal {

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) {
    throw UsageError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw UsageError("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ReliabilityDiagram::ReliabilityDiagram(int n_bins) {
  if (n_bins < 1) throw ConfigError("ReliabilityDiagram: need at least one bin");
  bins_.resize(static_cast<std::size_t>(n_bins));
  const double k = static_cast<double>(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    bins_[static_cast<std::size_t>(b)].lo = static_cast<double>(b) / k;
    bins_[static_cast<std::size_t>(b)].hi = static_cast<double>(b + 1) / k;
  }
}

std::size_t ReliabilityDiagram::bin_of(double c) const {
  if (!(c >= 0.0 && c <= 1.0)) {
    throw DomainError("reliability: confidence " + std::to_string(c) + " outside [0, 1]");
  }
  const std::size_t k = bins_.size();
  auto b = static_cast<std::size_t>(std::max(0.0, std::ceil(c * static_cast<double>(k)) - 1.0));
  if (b >= k) b = k - 1;
  // Correct the arithmetic guess against the stored edges.
  while (b > 0 && c <= bins_[b].lo) --b;
  while (b + 1 < k && c > bins_[b].hi) ++b;
  return b;
}

void ReliabilityDiagram::add(double confidence, bool correct) {
  ReliabilityBin& bin = bins_[bin_of(confidence)];
  ++bin.count;
  bin.sum_confidence += confidence;
  bin.sum_correct += correct ? 1.0 : 0.0;
}

void ReliabilityDiagram::merge(const ReliabilityDiagram& other) {
  if (other.bins_.size() != bins_.size()) throw UsageError("merge: bin counts differ");
  for (std::size_t b = 0; b < bins_.size(); ++b) {
    bins_[b].count += other.bins_[b].count;
    bins_[b].sum_confidence += other.bins_[b].sum_confidence;
    bins_[b].sum_correct += other.bins_[b].sum_correct;
  }
}

std::size_t ReliabilityDiagram::total() const noexcept {
  std::size_t n = 0;
  for (const auto& b : bins_) n += b.count;
  return n;
}

ReliabilityDiagram build_reliability(std::span<const double> confidences,
                                     std::span<const std::uint8_t> correct, int n_bins) {
  if (confidences.size() != correct.size()) {
    throw UsageError("build_reliability: confidence and correctness lengths differ");
  }
  ReliabilityDiagram d(n_bins);
  for (std::size_t i = 0; i < confidences.size(); ++i) d.add(confidences[i], correct[i] != 0);
  return d;
}

EceReport ece(const ReliabilityDiagram& diagram) {
  EceReport r;
  r.total = diagram.total();
  if (r.total == 0) throw UsageError("ece: no predictions");
  const double m = static_cast<double>(r.total);
  for (const ReliabilityBin& b : diagram.bins()) {
    EceBin eb{b.avg_accuracy(), b.avg_confidence(), static_cast<double>(b.count) / m};
    if (b.count > 0) r.ece += eb.weight * std::abs(eb.avg_accuracy - eb.avg_confidence);
    r.bins.push_back(eb);
  }
  r.percent = 100.0 * r.ece;
  return r;
}

double mean_nll(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("mean_nll: label count mismatch");
  if (labels.empty()) throw UsageError("mean_nll: no predictions");
  const Matrix lp = log_softmax_rows(logits);
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    total -= lp(r, static_cast<std::size_t>(labels[r]));
  }
  return total / static_cast<double>(labels.size());
}

Scores score(const ModelOutput& out, std::span<const int> labels, int n_bins) {
  Scores s{labels.size(), 0.0, 0.0, 0.0, ReliabilityDiagram(n_bins)};
  s.accuracy = accuracy(out.predicted, labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s.diagram.add(out.confidence[i], out.predicted[i] == labels[i]);
  }
  s.ece = ece(s.diagram).ece;
  s.nll = mean_nll(out.logits, labels);
  return s;
}

StreamEvaluation evaluate_stream(const CalibratedModel& cm, const Stream& stream, int n_bins) {
  StreamEvaluation ev{{}, Scores{0, 0.0, 0.0, 0.0, ReliabilityDiagram(n_bins)}};
  std::size_t hits = 0;
  double nll_sum = 0.0;
  for (const Experience& e : stream.experiences) {
    if (e.test.empty()) throw UsageError("evaluate_stream: experience " + std::to_string(e.id) +
                                         " has no test set");
    const ModelOutput out = predict(cm, e.test.inputs);
    Scores s = score(out, e.test.labels, n_bins);
    for (std::size_t i = 0; i < e.test.size(); ++i) hits += out.predicted[i] == e.test.labels[i];
    nll_sum += s.nll * static_cast<double>(s.n);
    ev.pooled.n += s.n;
    ev.pooled.diagram.merge(s.diagram);
    ev.per_experience.push_back(std::move(s));
  }
  if (ev.pooled.n == 0) throw UsageError("evaluate_stream: empty stream");
  const double n = static_cast<double>(ev.pooled.n);
  ev.pooled.accuracy = static_cast<double>(hits) / n;
  ev.pooled.nll = nll_sum / n;
  ev.pooled.ece = ece(ev.pooled.diagram).ece;
  return ev;
}

void write_reliability_csv(std::ostream& out, const ReliabilityDiagram& diagram) {
  out << "bin_lo,bin_hi,count,avg_confidence,avg_accuracy\n";
  char line[160];
  for (const ReliabilityBin& b : diagram.bins()) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%zu,%.6f,%.6f\n", b.lo, b.hi, b.count,
                  b.avg_confidence(), b.avg_accuracy());
    out << line;
  }
}

}  // namespace contcal
