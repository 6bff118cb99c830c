#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>

#include "contcal/numcore.hpp"

namespace contcal {

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(const std::string& s);

// value <- value - lr * grad. Grads are left untouched. Throws ConfigError for lr <= 0.
void sgd_step(std::span<Param* const> params, double lr);

struct AdamMoments {
  Matrix m;
  Matrix v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update of a single Param at step t >= 1.
void adam_step(Param& p, AdamMoments& state, double lr, double beta1, double beta2, double eps,
               std::int64_t t);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update to every listed Param; grads are not zeroed.
  virtual void step(std::span<Param* const> params) = 0;
  virtual double lr() const = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr);
  void step(std::span<Param* const> params) override;
  double lr() const override { return lr_; }

 private:
  double lr_;
};

// Moment state is kept per Param id, so parameters may join between steps
// (for instance a calibration head created after the first experience).
class Adam final : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<Param* const> params) override;
  double lr() const override { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::unordered_map<std::uint64_t, AdamMoments> state_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr);

}  // namespace contcal
