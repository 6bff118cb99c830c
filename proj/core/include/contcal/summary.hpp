#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace contcal {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

struct SummaryRow {
  std::string strategy;
  std::string calibrator;
  std::size_t n_seeds = 0;
  MeanStd accuracy;
  MeanStd ece;
  MeanStd nll;
};

// Every results.csv below each directory; throws UsageError when none is found.
std::vector<std::filesystem::path> find_results(std::span<const std::filesystem::path> dirs);

// Final-step "stream" rows grouped by (strategy, calibrator), sorted by that key.
// Throws UsageError on a header that differs from the results schema.
std::vector<SummaryRow> summarize(std::span<const std::filesystem::path> dirs);

inline constexpr const char* kSummaryHeader =
    "strategy,calibrator,n_seeds,accuracy_mean,accuracy_std,ece_mean,ece_std,nll_mean,nll_std";

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);
void print_summary(std::ostream& out, std::span<const SummaryRow> rows);

}  // namespace contcal
