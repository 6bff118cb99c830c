#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "contcal/datastream.hpp"
#include "contcal/model.hpp"
#include "contcal/optim.hpp"
#include "contcal/rng.hpp"

namespace contcal {

struct BufferItem {
  std::vector<double> x;
  int y = 0;
  std::vector<double> z;  // stored logits; empty when not recorded
  int experience = -1;
  Split split = Split::Train;
  std::uint32_t origin = 0;
};

// Fixed-capacity uniform sample of everything offered so far (Algorithm R).
class ReservoirBuffer {
 public:
  ReservoirBuffer(std::size_t capacity, std::uint64_t seed);

  // Appends while filling; afterwards replaces a uniformly chosen slot with
  // probability capacity / (seen + 1). `seen` increments either way.
  void insert(BufferItem item);

  // k draws uniformly with replacement; empty when the buffer is empty.
  std::vector<const BufferItem*> sample(std::size_t k);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t seen() const noexcept { return seen_; }
  bool empty() const noexcept { return items_.empty(); }
  const std::vector<BufferItem>& items() const noexcept { return items_; }

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<BufferItem> items_;
  SeededRng rng_;
};

struct MemoryBatch {
  Matrix inputs;
  std::vector<int> labels;
  Matrix logits;  // empty unless every item carries stored logits
};

MemoryBatch to_batch(const std::vector<const BufferItem*>& items);

enum class StrategyKind { Naive, Replay, DerPP, Joint };

std::string to_string(StrategyKind k);
StrategyKind parse_strategy_kind(const std::string& s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Naive;
  double alpha = 0.3;
  double beta = 0.8;
  std::size_t memory_size = 2000;
  int epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Sgd;

  bool uses_buffer() const { return kind == StrategyKind::Replay || kind == StrategyKind::DerPP; }
  void validate() const;
};

// Weighted loss components; `distill_alpha` already includes alpha, `hr` includes -lambda.
struct LossTerms {
  double ce = 0.0;
  double distill_alpha = 0.0;
  double ce_beta = 0.0;
  double hr = 0.0;

  double total() const { return ce + distill_alpha + ce_beta + hr; }
};

struct TrainReport {
  std::vector<double> epoch_loss;       // mean total loss per epoch
  std::vector<LossTerms> epoch_terms;   // mean of each term per epoch
  std::vector<double> step_losses;      // total loss of every minibatch step
  std::size_t steps = 0;
  std::size_t temperature_clamps = 0;   // times T hit its lower bound
  double wall_seconds = 0.0;
};

// Trains `cm` on exp.train. Head parameters train together with the base.
// `buffer` must be given exactly when cfg.kind is Replay or DerPP.
TrainReport train_experience(CalibratedModel& cm, const Experience& exp,
                             const StrategyConfig& cfg, Optimizer& optimizer, SeededRng& rng,
                             std::optional<double> hr_lambda = std::nullopt,
                             ReservoirBuffer* buffer = nullptr);

// Offline baseline: one run over the concatenation of every experience's train set.
TrainReport train_joint(CalibratedModel& cm, const Stream& stream, const StrategyConfig& cfg,
                        Optimizer& optimizer, SeededRng& rng,
                        std::optional<double> hr_lambda = std::nullopt);

// The single experience used by the Joint baseline: every split concatenated.
Experience joint_experience(const Stream& stream);

}  // namespace contcal
