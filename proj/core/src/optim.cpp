#include "contcal/optim.hpp"

#include <cmath>

#include "contcal/errors.hpp"

namespace contcal {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

namespace {

void check_lr(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("learning rate must be positive and finite, got " + std::to_string(lr));
  }
}

}  // namespace

void sgd_step(std::span<Param* const> params, double lr) {
  check_lr(lr);
  for (Param* p : params) {
    auto v = p->value.data();
    auto g = p->grad.data();
    if (v.size() != g.size()) throw UsageError("sgd_step: grad not populated");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

void adam_step(Param& p, AdamMoments& s, double lr, double beta1, double beta2, double eps,
               std::int64_t t) {
  if (t < 1) throw ConfigError("adam_step: t must be >= 1");
  const std::size_t n = p.value.size();
  if (p.grad.size() != n) throw UsageError("adam_step: grad not populated");
  if (s.m.size() != n) {
    s.m = Matrix(p.value.rows(), p.value.cols());
    s.v = Matrix(p.value.rows(), p.value.cols());
  }
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  auto v = p.value.data();
  auto g = p.grad.data();
  auto m1 = s.m.data();
  auto m2 = s.v.data();
  for (std::size_t i = 0; i < n; ++i) {
    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m1[i] / c1;
    const double vhat = m2[i] / c2;
    v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  s.t = t;
}

Sgd::Sgd(double lr) : lr_(lr) { check_lr(lr); }

void Sgd::step(std::span<Param* const> params) { sgd_step(params, lr_); }

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  check_lr(lr);
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam: eps must be positive");
}

void Adam::step(std::span<Param* const> params) {
  for (Param* p : params) {
    AdamMoments& s = state_[p->id()];
    adam_step(*p, s, lr_, beta1_, beta2_, eps_, s.t + 1);
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr) {
  if (kind == OptimizerKind::Sgd) return std::make_unique<Sgd>(lr);
  return std::make_unique<Adam>(lr);
}

}  // namespace contcal
