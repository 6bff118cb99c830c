#include "contcal/datastream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "contcal/errors.hpp"

namespace contcal {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

void LabeledDataset::validate() const {
  if (inputs.rows() != labels.size()) {
    throw DimensionError("LabeledDataset: " + std::to_string(inputs.rows()) + " input rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (origin.size() != labels.size()) {
    throw DimensionError("LabeledDataset: origin ids do not match example count");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw DomainError("LabeledDataset: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(n_classes) + ")");
    }
  }
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> rows, Split split) {
  LabeledDataset out;
  out.n_classes = ds.n_classes;
  out.split = split;
  out.inputs = Matrix(rows.size(), ds.dim());
  out.labels.reserve(rows.size());
  out.origin.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= ds.size()) throw UsageError("subset: row index out of range");
    auto src = ds.inputs.row(r);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    out.labels.push_back(ds.labels[r]);
    out.origin.push_back(ds.origin[r]);
  }
  return out;
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> rows) {
  return subset(ds, rows, ds.split);
}

LabeledDataset concat(std::span<const LabeledDataset* const> parts) {
  LabeledDataset out;
  if (parts.empty()) return out;
  const std::size_t dim = parts.front()->dim();
  out.n_classes = parts.front()->n_classes;
  out.split = parts.front()->split;
  std::size_t total = 0;
  for (const LabeledDataset* p : parts) {
    if (p->dim() != dim && !p->empty()) {
      throw DimensionError("concat: datasets of dimension " + std::to_string(dim) + " and " +
                           std::to_string(p->dim()));
    }
    if (p->split != out.split) throw UsageError("concat: mixed splits");
    out.n_classes = std::max(out.n_classes, p->n_classes);
    total += p->size();
  }
  std::vector<double> data;
  data.reserve(total * dim);
  for (const LabeledDataset* p : parts) {
    auto d = p->inputs.data();
    data.insert(data.end(), d.begin(), d.end());
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    out.origin.insert(out.origin.end(), p->origin.begin(), p->origin.end());
  }
  out.inputs = Matrix(total, dim, std::move(data));
  return out;
}

void Stream::validate() const {
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const Experience& e = experiences[i];
    if (e.id != static_cast<int>(i)) throw UsageError("Stream: experience ids must be 0..N-1");
    for (int c : e.classes) {
      if (c < 0 || c >= total_classes) throw DomainError("Stream: class id out of range");
    }
    e.train.validate();
    e.val.validate();
    e.test.validate();
  }
}

void require_not_test(const LabeledDataset& ds, const std::string& phase) {
  if (ds.split == Split::Test) {
    throw ProvenanceError(phase + ": test data must never be used for training or calibration");
  }
}

namespace {

std::vector<int> resolve_class_order(std::span<const int> class_order, int n_classes) {
  std::vector<int> order;
  if (class_order.empty()) {
    order.resize(static_cast<std::size_t>(n_classes));
    std::iota(order.begin(), order.end(), 0);
    return order;
  }
  order.assign(class_order.begin(), class_order.end());
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  bool ok = static_cast<int>(sorted.size()) == n_classes;
  for (std::size_t i = 0; ok && i < sorted.size(); ++i) ok = sorted[i] == static_cast<int>(i);
  if (!ok) {
    throw ConfigError("class_order must be a permutation of 0.." + std::to_string(n_classes - 1));
  }
  return order;
}

// Largest-remainder allocation of `total` validation slots across classes.
std::vector<std::size_t> stratified_quota(const std::vector<std::size_t>& class_sizes,
                                          double fraction, std::size_t total) {
  std::vector<std::size_t> quota(class_sizes.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < class_sizes.size(); ++i) {
    const double exact = fraction * static_cast<double>(class_sizes[i]);
    quota[i] = std::min(class_sizes[i], static_cast<std::size_t>(std::floor(exact)));
    assigned += quota[i];
    remainder.emplace_back(exact - static_cast<double>(quota[i]), i);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < remainder.size(); ++k) {
    const std::size_t i = remainder[k].second;
    if (quota[i] < class_sizes[i]) {
      ++quota[i];
      ++assigned;
    }
  }
  return quota;
}

}  // namespace

Stream make_class_incremental(const LabeledDataset& train_pool, const LabeledDataset& test_pool,
                              int n_experiences, std::span<const int> class_order,
                              double val_fraction, std::uint64_t seed) {
  require_not_test(train_pool, "make_class_incremental");
  train_pool.validate();
  test_pool.validate();
  if (train_pool.dim() != test_pool.dim()) {
    throw DimensionError("make_class_incremental: train and test dimensions differ");
  }
  const int n_classes = std::max(train_pool.n_classes, test_pool.n_classes);
  if (n_experiences <= 0 || n_classes % n_experiences != 0) {
    throw ConfigError("make_class_incremental: " + std::to_string(n_classes) +
                      " classes cannot be split evenly into " + std::to_string(n_experiences) +
                      " experiences");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("make_class_incremental: val_fraction must lie in (0, 1)");
  }
  const std::vector<int> order = resolve_class_order(class_order, n_classes);
  const int per_exp = n_classes / n_experiences;

  std::vector<std::vector<std::size_t>> train_rows(static_cast<std::size_t>(n_classes));
  std::vector<std::vector<std::size_t>> test_rows(static_cast<std::size_t>(n_classes));
  for (std::size_t r = 0; r < train_pool.size(); ++r)
    train_rows[static_cast<std::size_t>(train_pool.labels[r])].push_back(r);
  for (std::size_t r = 0; r < test_pool.size(); ++r)
    test_rows[static_cast<std::size_t>(test_pool.labels[r])].push_back(r);

  SeededRng rng(seed);
  Stream stream;
  stream.total_classes = n_classes;
  for (int e = 0; e < n_experiences; ++e) {
    Experience exp;
    exp.id = e;
    exp.classes.assign(order.begin() + e * per_exp, order.begin() + (e + 1) * per_exp);

    std::vector<std::size_t> sizes;
    std::size_t pool = 0;
    for (int c : exp.classes) {
      sizes.push_back(train_rows[static_cast<std::size_t>(c)].size());
      pool += sizes.back();
    }
    const auto n_val = static_cast<std::size_t>(
        std::ceil(val_fraction * static_cast<double>(pool) - 1e-9));
    const auto quota = stratified_quota(sizes, val_fraction, n_val);

    std::vector<std::size_t> tr, va, te;
    for (std::size_t k = 0; k < exp.classes.size(); ++k) {
      const auto c = static_cast<std::size_t>(exp.classes[k]);
      std::vector<std::size_t> rows = train_rows[c];
      rng.shuffle(std::span<std::size_t>(rows));
      va.insert(va.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(quota[k]));
      tr.insert(tr.end(), rows.begin() + static_cast<std::ptrdiff_t>(quota[k]), rows.end());
      te.insert(te.end(), test_rows[c].begin(), test_rows[c].end());
    }
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    std::sort(te.begin(), te.end());
    exp.train = subset(train_pool, tr, Split::Train);
    exp.val = subset(train_pool, va, Split::Val);
    exp.test = subset(test_pool, te, Split::Test);
    exp.train.n_classes = exp.val.n_classes = exp.test.n_classes = n_classes;
    stream.experiences.push_back(std::move(exp));
  }
  return stream;
}

Stream make_synthetic_gaussian_stream(const SyntheticStreamSpec& spec, std::uint64_t seed) {
  if (spec.n_classes <= 0 || spec.dim <= 0 || spec.n_train_per_class <= 0 ||
      spec.n_val_per_class <= 0 || spec.n_test_per_class <= 0 || spec.n_experiences <= 0 ||
      spec.class_means_scale < 0.0) {
    throw ConfigError("synthetic stream: sizes must be positive and the mean scale nonnegative");
  }
  if (spec.n_classes % spec.n_experiences != 0) {
    throw ConfigError("synthetic stream: " + std::to_string(spec.n_classes) +
                      " classes cannot be split evenly into " +
                      std::to_string(spec.n_experiences) + " experiences");
  }
  SeededRng rng(seed);
  const auto dim = static_cast<std::size_t>(spec.dim);
  const auto n_classes = static_cast<std::size_t>(spec.n_classes);

  Matrix means(n_classes, dim);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto row = means.row(c);
    double norm = 0.0;
    for (double& v : row) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : row) v = norm > 0.0 ? v / norm * spec.class_means_scale : 0.0;
  }

  auto draw = [&](int per_class, Split split) {
    LabeledDataset ds;
    ds.n_classes = spec.n_classes;
    ds.split = split;
    const std::size_t n = n_classes * static_cast<std::size_t>(per_class);
    ds.inputs = Matrix(n, dim);
    std::size_t r = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      for (int k = 0; k < per_class; ++k, ++r) {
        auto row = ds.inputs.row(r);
        auto mu = means.row(c);
        for (std::size_t d = 0; d < dim; ++d) row[d] = mu[d] + rng.normal();
        ds.labels.push_back(static_cast<int>(c));
        ds.origin.push_back(static_cast<std::uint32_t>(r));
      }
    }
    return ds;
  };
  const LabeledDataset train = draw(spec.n_train_per_class, Split::Train);
  const LabeledDataset val = draw(spec.n_val_per_class, Split::Val);
  const LabeledDataset test = draw(spec.n_test_per_class, Split::Test);

  const int per_exp = spec.n_classes / spec.n_experiences;
  auto rows_for = [](const LabeledDataset& ds, int lo, int hi) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < ds.size(); ++r)
      if (ds.labels[r] >= lo && ds.labels[r] < hi) rows.push_back(r);
    return rows;
  };
  Stream stream;
  stream.total_classes = spec.n_classes;
  for (int e = 0; e < spec.n_experiences; ++e) {
    const int lo = e * per_exp;
    const int hi = lo + per_exp;
    Experience exp;
    exp.id = e;
    for (int c = lo; c < hi; ++c) exp.classes.push_back(c);
    exp.train = subset(train, rows_for(train, lo, hi));
    exp.val = subset(val, rows_for(val, lo, hi));
    exp.test = subset(test, rows_for(test, lo, hi));
    stream.experiences.push_back(std::move(exp));
  }
  return stream;
}

std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size,
                                                        SeededRng& rng) {
  if (batch_size == 0) throw UsageError("minibatches: batch_size must be >= 1");
  if (n == 0) throw UsageError("minibatches: empty dataset");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                     perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch gather(const LabeledDataset& ds, std::span<const std::size_t> rows) {
  Batch b;
  b.inputs = Matrix(rows.size(), ds.dim());
  b.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = ds.inputs.row(rows[i]);
    std::memcpy(b.inputs.row(i).data(), src.data(), src.size() * sizeof(double));
    b.labels.push_back(ds.labels[rows[i]]);
  }
  b.rows.assign(rows.begin(), rows.end());
  return b;
}

std::vector<Batch> minibatches(const LabeledDataset& ds, std::size_t batch_size, SeededRng& rng) {
  std::vector<Batch> out;
  for (const auto& idx : minibatch_indices(ds.size(), batch_size, rng)) out.push_back(gather(ds, idx));
  return out;
}

}  // namespace contcal
