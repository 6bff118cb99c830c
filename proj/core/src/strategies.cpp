#include "contcal/strategies.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "contcal/errors.hpp"

namespace contcal {

// ---- reservoir -----------------------------------------------------------------

ReservoirBuffer::ReservoirBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  items_.reserve(capacity);
}

void ReservoirBuffer::insert(BufferItem item) {
  if (!items_.empty()) {
    const BufferItem& ref = items_.front();
    if (item.x.size() != ref.x.size() || item.z.size() != ref.z.size()) {
      throw DimensionError("ReservoirBuffer: item shape differs from stored items");
    }
  }
  if (seen_ < capacity_) {
    items_.push_back(std::move(item));
  } else {
    const std::uint64_t j = rng_.index(static_cast<std::uint64_t>(seen_) + 1);
    if (j < capacity_) items_[static_cast<std::size_t>(j)] = std::move(item);
  }
  ++seen_;
}

std::vector<const BufferItem*> ReservoirBuffer::sample(std::size_t k) {
  std::vector<const BufferItem*> out;
  if (items_.empty()) return out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(&items_[rng_.index(items_.size())]);
  return out;
}

MemoryBatch to_batch(const std::vector<const BufferItem*>& items) {
  MemoryBatch b;
  if (items.empty()) return b;
  const std::size_t dim = items.front()->x.size();
  const std::size_t zdim = items.front()->z.size();
  b.inputs = Matrix(items.size(), dim);
  if (zdim > 0) b.logits = Matrix(items.size(), zdim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::memcpy(b.inputs.row(i).data(), items[i]->x.data(), dim * sizeof(double));
    if (zdim > 0) std::memcpy(b.logits.row(i).data(), items[i]->z.data(), zdim * sizeof(double));
    b.labels.push_back(items[i]->y);
  }
  return b;
}

// ---- config --------------------------------------------------------------------

std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Naive: return "naive";
    case StrategyKind::Replay: return "replay";
    case StrategyKind::DerPP: return "derpp";
    case StrategyKind::Joint: return "joint";
  }
  return "?";
}

StrategyKind parse_strategy_kind(const std::string& s) {
  if (s == "naive") return StrategyKind::Naive;
  if (s == "replay") return StrategyKind::Replay;
  if (s == "derpp") return StrategyKind::DerPP;
  if (s == "joint") return StrategyKind::Joint;
  throw ConfigError("unknown strategy '" + s + "' (expected naive, replay, derpp or joint)");
}

void StrategyConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("strategy: alpha and beta must be >= 0");
  if (epochs < 1) throw ConfigError("strategy: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("strategy: batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("strategy: lr must be positive");
  if (uses_buffer() && memory_size < 1) throw ConfigError("strategy: memory_size must be >= 1");
}

// ---- training ------------------------------------------------------------------

namespace {

Matrix stack_rows(const Matrix& a, const Matrix& b) {
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) throw DimensionError("stack_rows: " + a.shape() + " vs " + b.shape());
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

// Row-weighted mean entropy over several logit blocks.
Var pooled_entropy(const std::vector<Var>& blocks) {
  double rows = 0.0;
  for (Var v : blocks) rows += static_cast<double>(v.rows());
  Var total;
  for (Var v : blocks) {
    Var term = scale(entropy_from_logits(v), static_cast<double>(v.rows()) / rows);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

}  // namespace

TrainReport train_experience(CalibratedModel& cm, const Experience& exp,
                             const StrategyConfig& cfg, Optimizer& optimizer, SeededRng& rng,
                             std::optional<double> hr_lambda, ReservoirBuffer* buffer) {
  cfg.validate();
  if (cfg.kind == StrategyKind::Joint) {
    throw UsageError("train_experience: use train_joint for the joint baseline");
  }
  if (cfg.uses_buffer() != (buffer != nullptr)) {
    throw UsageError("train_experience: strategy " + to_string(cfg.kind) +
                     (buffer ? " does not take" : " requires") + " a replay buffer");
  }
  if (hr_lambda && !(*hr_lambda >= 0.0)) throw ConfigError("train_experience: hr_lambda must be >= 0");
  require_not_test(exp.train, "train_experience");
  if (exp.train.empty()) throw UsageError("train_experience: empty training set");

  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  const bool derpp = cfg.kind == StrategyKind::DerPP;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossTerms sums;
    double total_sum = 0.0;
    const auto batches = minibatch_indices(exp.train.size(), cfg.batch_size, rng);
    for (const auto& rows : batches) {
      const Batch batch = gather(exp.train, rows);
      std::vector<Param*> params = cm.parameters();
      zero_grads(params);

      Tape tape;
      LossTerms terms;
      std::vector<Var> trained_blocks;
      Var current_logits;
      Var loss;

      if (cfg.kind == StrategyKind::Replay && buffer != nullptr && !buffer->empty()) {
        const MemoryBatch mem = to_batch(buffer->sample(batch.labels.size()));
        std::vector<int> labels = batch.labels;
        labels.insert(labels.end(), mem.labels.begin(), mem.labels.end());
        Var z = cm.logits(tape, stack_rows(batch.inputs, mem.inputs));
        loss = cross_entropy(z, labels);
        terms.ce = loss.scalar();
        trained_blocks.push_back(z);
      } else {
        current_logits = cm.logits(tape, batch.inputs);
        loss = cross_entropy(current_logits, batch.labels);
        terms.ce = loss.scalar();
        trained_blocks.push_back(current_logits);
      }

      if (derpp && !buffer->empty()) {
        const MemoryBatch m1 = to_batch(buffer->sample(batch.labels.size()));
        Var z1 = cm.logits(tape, m1.inputs);
        Var distill = scale(mean_sq_l2(tape.constant(m1.logits), z1), cfg.alpha);
        const MemoryBatch m2 = to_batch(buffer->sample(batch.labels.size()));
        Var z2 = cm.logits(tape, m2.inputs);
        Var ce_beta = scale(cross_entropy(z2, m2.labels), cfg.beta);
        terms.distill_alpha = distill.scalar();
        terms.ce_beta = ce_beta.scalar();
        loss = add(add(loss, distill), ce_beta);
        trained_blocks.push_back(z1);
        trained_blocks.push_back(z2);
      }

      if (hr_lambda) {
        Var hr = scale(pooled_entropy(trained_blocks), -*hr_lambda);
        terms.hr = hr.scalar();
        loss = add(loss, hr);
      }

      tape.backward(loss);
      cm.head.mask_gradients();
      optimizer.step(params);
      if (cm.head.project()) ++report.temperature_clamps;

      if (buffer != nullptr) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          BufferItem item;
          auto x = batch.inputs.row(i);
          item.x.assign(x.begin(), x.end());
          item.y = batch.labels[i];
          if (derpp) {
            auto z = current_logits.value().row(i);
            item.z.assign(z.begin(), z.end());
          }
          item.experience = exp.id;
          item.split = exp.train.split;
          item.origin = exp.train.origin[rows[i]];
          buffer->insert(std::move(item));
        }
      }

      const double step_loss = loss.scalar();
      report.step_losses.push_back(step_loss);
      total_sum += step_loss;
      sums.ce += terms.ce;
      sums.distill_alpha += terms.distill_alpha;
      sums.ce_beta += terms.ce_beta;
      sums.hr += terms.hr;
      ++report.steps;
    }
    const double n = static_cast<double>(batches.size());
    report.epoch_loss.push_back(total_sum / n);
    report.epoch_terms.push_back(
        LossTerms{sums.ce / n, sums.distill_alpha / n, sums.ce_beta / n, sums.hr / n});
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

Experience joint_experience(const Stream& stream) {
  if (stream.experiences.empty()) throw UsageError("joint_experience: empty stream");
  std::vector<const LabeledDataset*> train, val, test;
  Experience joint;
  joint.id = 0;
  for (const Experience& e : stream.experiences) {
    train.push_back(&e.train);
    val.push_back(&e.val);
    test.push_back(&e.test);
    joint.classes.insert(joint.classes.end(), e.classes.begin(), e.classes.end());
  }
  joint.train = concat(train);
  joint.val = concat(val);
  joint.test = concat(test);
  return joint;
}

TrainReport train_joint(CalibratedModel& cm, const Stream& stream, const StrategyConfig& cfg,
                        Optimizer& optimizer, SeededRng& rng, std::optional<double> hr_lambda) {
  if (stream.experiences.empty()) throw UsageError("train_joint: empty stream");
  std::vector<const LabeledDataset*> parts;
  for (const Experience& e : stream.experiences) parts.push_back(&e.train);
  Experience joint;
  joint.id = 0;
  joint.train = concat(parts);
  StrategyConfig naive = cfg;
  naive.kind = StrategyKind::Naive;
  return train_experience(cm, joint, naive, optimizer, rng, hr_lambda, nullptr);
}

}  // namespace contcal
