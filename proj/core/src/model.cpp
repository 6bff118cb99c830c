#include "contcal/model.hpp"

#include <algorithm>
#include <cmath>

#include "contcal/errors.hpp"
#include "contcal/rng.hpp"

namespace contcal {

std::vector<Param*> MlpClassifier::parameters() { return {&w1, &b1, &w2, &b2}; }

MlpClassifier init_mlp(std::size_t in_dim, std::size_t hidden_dim, std::size_t n_classes,
                       std::uint64_t seed) {
  if (in_dim == 0 || hidden_dim == 0 || n_classes == 0) {
    throw ConfigError("init_mlp: dimensions must be positive");
  }
  SeededRng rng(seed);
  auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    return w;
  };
  MlpClassifier m;
  m.in_dim = in_dim;
  m.hidden_dim = hidden_dim;
  m.n_classes = n_classes;
  m.w1 = Param(glorot(in_dim, hidden_dim));
  m.b1 = Param(Matrix(1, hidden_dim));
  m.w2 = Param(glorot(hidden_dim, n_classes));
  m.b2 = Param(Matrix(1, n_classes));
  return m;
}

namespace {

void check_input(const MlpClassifier& m, const Matrix& x) {
  if (x.cols() != m.in_dim) {
    throw DimensionError("forward_logits: input " + x.shape() + " does not match in_dim " +
                         std::to_string(m.in_dim));
  }
}

}  // namespace

Var forward_logits(MlpClassifier& m, Var x) {
  check_input(m, x.value());
  Tape& t = x.tape();
  Var h = relu(add_row_bias(matmul(x, t.param(m.w1)), t.param(m.b1)));
  return add_row_bias(matmul(h, t.param(m.w2)), t.param(m.b2));
}

Matrix forward_logits(const MlpClassifier& m, const Matrix& x) {
  check_input(m, x);
  Matrix h(x.rows(), m.hidden_dim);
  gemm(x, false, m.w1.value, false, h, false);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    auto row = h.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double v = row[c] + m.b1.value(0, c);
      row[c] = v > 0.0 ? v : 0.0;
    }
  }
  Matrix z(x.rows(), m.n_classes);
  gemm(h, false, m.w2.value, false, z, false);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += m.b2.value(0, c);
  }
  return z;
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Identity: return "identity";
    case HeadKind::Temperature: return "temperature";
    case HeadKind::Affine: return "affine";
  }
  return "?";
}

CalibrationHead CalibrationHead::identity() { return {}; }

CalibrationHead CalibrationHead::temperature(double t) {
  if (!(t >= kMinTemperature) || !std::isfinite(t)) {
    throw DomainError("temperature must be finite and >= " + std::to_string(kMinTemperature));
  }
  CalibrationHead h;
  h.head_ = TemperatureHead{Param(Matrix(1, 1, t))};
  return h;
}

CalibrationHead CalibrationHead::affine(std::size_t n_classes, bool diagonal_only) {
  CalibrationHead h;
  h.head_ = AffineHead{Param(Matrix::identity(n_classes)), Param(Matrix(1, n_classes)),
                       diagonal_only};
  return h;
}

HeadKind CalibrationHead::kind() const {
  return static_cast<HeadKind>(head_.index());
}

std::vector<Param*> CalibrationHead::parameters() {
  if (auto* t = std::get_if<TemperatureHead>(&head_)) return {&t->t};
  if (auto* a = std::get_if<AffineHead>(&head_)) return {&a->w, &a->b};
  return {};
}

void CalibrationHead::mask_gradients() {
  auto* a = std::get_if<AffineHead>(&head_);
  if (a == nullptr || !a->diagonal_only) return;
  Matrix& g = a->w.grad;
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c)
      if (r != c) g(r, c) = 0.0;
}

bool CalibrationHead::project() {
  if (auto* t = std::get_if<TemperatureHead>(&head_)) {
    double& v = t->t.value(0, 0);
    if (!(v >= kMinTemperature)) {
      v = kMinTemperature;
      return true;
    }
    return false;
  }
  if (auto* a = std::get_if<AffineHead>(&head_); a != nullptr && a->diagonal_only) {
    Matrix& w = a->w.value;
    for (std::size_t r = 0; r < w.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c)
        if (r != c) w(r, c) = 0.0;
  }
  return false;
}

Var CalibrationHead::apply(Var z) {
  Tape& tape = z.tape();
  if (auto* t = std::get_if<TemperatureHead>(&head_)) return div_scalar(z, tape.param(t->t));
  if (auto* a = std::get_if<AffineHead>(&head_)) {
    if (z.cols() != a->w.value.rows()) {
      throw DimensionError("apply_head: logits " + z.value().shape() + " vs W " +
                           a->w.value.shape());
    }
    return add_row_bias(matmul(z, transpose(tape.param(a->w))), tape.param(a->b));
  }
  return z;
}

Matrix CalibrationHead::apply(const Matrix& z) const {
  if (const auto* t = std::get_if<TemperatureHead>(&head_)) {
    Matrix out = z;
    const double temp = t->t.value(0, 0);
    for (double& v : out.data()) v /= temp;
    return out;
  }
  if (const auto* a = std::get_if<AffineHead>(&head_)) {
    if (z.cols() != a->w.value.rows()) {
      throw DimensionError("apply_head: logits " + z.shape() + " vs W " + a->w.value.shape());
    }
    Matrix out(z.rows(), a->w.value.rows());
    gemm(z, false, a->w.value, true, out, false);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += a->b.value(0, c);
    }
    return out;
  }
  return z;
}

std::vector<Param*> CalibratedModel::parameters() {
  std::vector<Param*> out = base.parameters();
  for (Param* p : head.parameters()) out.push_back(p);
  return out;
}

Var CalibratedModel::logits(Tape& tape, const Matrix& x) {
  return head.apply(forward_logits(base, tape.constant(x)));
}

ModelOutput output_from_logits(Matrix logits) {
  ModelOutput out;
  out.probs = softmax_rows(logits);
  out.predicted = argmax_rows(out.probs);
  out.confidence.resize(out.probs.rows());
  for (std::size_t r = 0; r < out.probs.rows(); ++r) {
    out.confidence[r] = out.probs(r, static_cast<std::size_t>(out.predicted[r]));
  }
  out.logits = std::move(logits);
  return out;
}

ModelOutput predict(const CalibratedModel& cm, const Matrix& x) {
  return output_from_logits(cm.head.apply(forward_logits(cm.base, x)));
}

}  // namespace contcal
