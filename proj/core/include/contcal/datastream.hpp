#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "contcal/numcore.hpp"
#include "contcal/rng.hpp"

namespace contcal {

enum class Split { Train, Val, Test };

std::string to_string(Split s);

// N examples of dimension D. `origin[i]` is the row index of example i in the
// source it was drawn from; together with `split` it identifies an example.
struct LabeledDataset {
  Matrix inputs;
  std::vector<int> labels;
  int n_classes = 0;
  Split split = Split::Train;
  std::vector<std::uint32_t> origin;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return inputs.cols(); }
  bool empty() const noexcept { return labels.empty(); }

  // Throws DimensionError / DomainError when the invariants do not hold.
  void validate() const;
};

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> rows, Split split);
LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> rows);
// Row-wise concatenation; all parts must share dim, n_classes and split.
LabeledDataset concat(std::span<const LabeledDataset* const> parts);

struct Experience {
  int id = 0;
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  std::vector<int> classes;
};

struct Stream {
  std::vector<Experience> experiences;
  int total_classes = 0;

  std::size_t size() const noexcept { return experiences.size(); }
  void validate() const;
};

// Throws ProvenanceError if `ds` is a test split; `phase` names the caller.
void require_not_test(const LabeledDataset& ds, const std::string& phase);

// Splits `train_pool` class-incrementally into n_experiences with a seeded,
// class-stratified validation carve-out of ceil(val_fraction * pool) examples per
// experience. Test examples are taken from `test_pool` only.
Stream make_class_incremental(const LabeledDataset& train_pool, const LabeledDataset& test_pool,
                              int n_experiences, std::span<const int> class_order,
                              double val_fraction, std::uint64_t seed);

struct SyntheticStreamSpec {
  int n_classes = 10;
  int dim = 20;
  int n_train_per_class = 200;
  int n_val_per_class = 50;
  int n_test_per_class = 100;
  double class_means_scale = 4.0;
  int n_experiences = 5;
};

// Isotropic unit-variance Gaussian classes around seeded random means of norm
// class_means_scale, split class-incrementally in ascending class order.
Stream make_synthetic_gaussian_stream(const SyntheticStreamSpec& spec, std::uint64_t seed);

struct Batch {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<std::size_t> rows;  // source rows in the dataset
};

// Seeded permutation cut into batches; every row appears exactly once.
std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size,
                                                        SeededRng& rng);
Batch gather(const LabeledDataset& ds, std::span<const std::size_t> rows);
std::vector<Batch> minibatches(const LabeledDataset& ds, std::size_t batch_size, SeededRng& rng);

}  // namespace contcal
