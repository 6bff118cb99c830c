#include "contcal/summary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "contcal/errors.hpp"
#include "contcal/harness.hpp"

namespace contcal {

namespace fs = std::filesystem;

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw UsageError("mean_std: no values");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

std::vector<fs::path> find_results(std::span<const fs::path> dirs) {
  std::vector<fs::path> found;
  for (const fs::path& d : dirs) {
    if (!fs::is_directory(d)) throw UsageError("summarize: not a directory: " + d.string());
    for (const auto& entry : fs::recursive_directory_iterator(d)) {
      if (entry.is_regular_file() && entry.path().filename() == "results.csv") {
        found.push_back(entry.path());
      }
    }
  }
  if (found.empty()) throw UsageError("summarize: no results.csv found");
  std::sort(found.begin(), found.end());
  return found;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

struct FinalRow {
  int step = -1;
  double accuracy = 0.0, ece = 0.0, nll = 0.0;
};

}  // namespace

std::vector<SummaryRow> summarize(std::span<const fs::path> dirs) {
  struct Samples {
    std::vector<double> acc, ece, nll;
  };
  std::map<std::pair<std::string, std::string>, Samples> groups;
  for (const fs::path& file : find_results(dirs)) {
    std::ifstream in(file);
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) {
      throw UsageError("summarize: " + file.string() + " does not have the results schema");
    }
    // Last step's stream row for each (seed, strategy, calibrator) in this file.
    std::map<std::tuple<std::string, std::string, std::string>, FinalRow> finals;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto c = split_csv(line);
      if (c.size() != 10) {
        throw UsageError("summarize: " + file.string() + ":" + std::to_string(lineno) +
                         ": expected 10 columns");
      }
      if (c[5] != "stream") continue;
      FinalRow r;
      try {
        r = {std::stoi(c[3]), std::stod(c[7]), std::stod(c[8]), std::stod(c[9])};
      } catch (const std::exception&) {
        throw UsageError("summarize: " + file.string() + ":" + std::to_string(lineno) +
                         ": malformed number");
      }
      FinalRow& slot = finals[{c[0], c[1], c[2]}];
      if (r.step >= slot.step) slot = r;
    }
    for (const auto& [key, r] : finals) {
      Samples& s = groups[{std::get<1>(key), std::get<2>(key)}];
      s.acc.push_back(r.accuracy);
      s.ece.push_back(r.ece);
      s.nll.push_back(r.nll);
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, s] : groups) {
    rows.push_back({key.first, key.second, s.acc.size(), mean_std(s.acc), mean_std(s.ece),
                    mean_std(s.nll)});
  }
  return rows;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kSummaryHeader << '\n';
  char buf[256];
  for (const SummaryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f", r.n_seeds, r.accuracy.mean,
                  r.accuracy.std, r.ece.mean, r.ece.std, r.nll.mean, r.nll.std);
    out << r.strategy << ',' << r.calibrator << ',' << buf << '\n';
  }
}

void print_summary(std::ostream& out, std::span<const SummaryRow> rows) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %-10s %5s  %-18s %-18s %-18s\n", "strategy", "calibrator",
                "seeds", "accuracy (%)", "ece (%)", "nll");
  out << buf;
  for (const SummaryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %-10s %5zu  %7.2f +- %-7.2f %7.2f +- %-7.2f %7.4f +- %-7.4f\n",
                  r.strategy.c_str(), r.calibrator.c_str(), r.n_seeds, 100.0 * r.accuracy.mean,
                  100.0 * r.accuracy.std, 100.0 * r.ece.mean, 100.0 * r.ece.std, r.nll.mean,
                  r.nll.std);
    out << buf;
  }
}

}  // namespace contcal
