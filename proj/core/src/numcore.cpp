#include "contcal/numcore.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "contcal/errors.hpp"

namespace contcal {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_eigen(const Matrix& m) {
  return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

MutMap as_eigen(Matrix& m) {
  return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

std::atomic<std::uint64_t> g_next_param_id{1};

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape() + " and " +
                       b.shape());
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

void check_labels(const char* op, const Matrix& m, std::span<const int> labels) {
  if (labels.size() != m.rows()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + m.shape() + " input");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= m.cols()) {
      throw DomainError(std::string(op) + ": label " + std::to_string(y) +
                        " outside [0, " + std::to_string(m.cols()) + ")");
    }
  }
}

}  // namespace

// ---- Matrix --------------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: " + std::to_string(data_.size()) + " values for shape " +
                         shape());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

// ---- Param ---------------------------------------------------------------------

Param::Param(Matrix v)
    : value(std::move(v)), grad(value.rows(), value.cols()), id_(g_next_param_id++) {}

Param::Param(const Param& other)
    : value(other.value), grad(other.grad), id_(g_next_param_id++) {}

Param& Param::operator=(const Param& other) {
  if (this != &other) {
    value = other.value;
    grad = other.grad;
    id_ = g_next_param_id++;
  }
  return *this;
}

void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      p->grad = Matrix(p->value.rows(), p->value.cols());
    } else {
      p->grad.fill(0.0);
    }
  }
}

// ---- Var / Tape ----------------------------------------------------------------

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw UsageError("Var: use of an unbound variable");
  return tape_->value_of(index_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw UsageError("Var::scalar: value has shape " + v.shape());
  }
  return v(0, 0);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.index_ >= nodes_.size()) {
    throw UsageError("Tape: variable belongs to a different tape");
  }
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.index_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{},
                        nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.index_].requires_grad;
}

Matrix& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.index_];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  if (!nodes_[v.index_].requires_grad) return;
  Matrix& dst = grad_buffer(v);
  require_same_shape("accumulate", dst, g);
  auto d = dst.data();
  auto s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void Tape::backward(Var loss) {
  check_owned(loss);
  const Matrix& lv = nodes_[loss.index_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("backward: loss must be a 1x1 scalar, got " + lv.shape());
  }
  for (Node& n : nodes_) n.grad = Matrix();
  if (!nodes_[loss.index_].requires_grad) return;
  nodes_[loss.index_].grad = Matrix(1, 1, 1.0);

  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.param != nullptr) {
      Matrix& pg = n.param->grad;
      if (pg.rows() != n.grad.rows() || pg.cols() != n.grad.cols()) {
        pg = Matrix(n.grad.rows(), n.grad.cols());
      }
      auto d = pg.data();
      auto s = n.grad.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
    }
    if (n.backward) n.backward(*this, n.grad);
  }
}

// ---- kernels -------------------------------------------------------------------

void gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b, Matrix& out,
          bool accumulate) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) shape_mismatch("matmul", a, b);
  if (out.rows() != m || out.cols() != n) {
    if (accumulate) throw DimensionError("gemm: accumulator shape " + out.shape());
    out = Matrix(m, n);
  }
  auto o = as_eigen(out);
  const auto ea = as_eigen(a);
  const auto eb = as_eigen(b);
  if (k == 0) {
    if (!accumulate) o.setZero();
    return;
  }
  if (accumulate) {
    if (!transpose_a && !transpose_b) o.noalias() += ea * eb;
    else if (transpose_a && !transpose_b) o.noalias() += ea.transpose() * eb;
    else if (!transpose_a && transpose_b) o.noalias() += ea * eb.transpose();
    else o.noalias() += ea.transpose() * eb.transpose();
  } else {
    if (!transpose_a && !transpose_b) o.noalias() = ea * eb;
    else if (transpose_a && !transpose_b) o.noalias() = ea.transpose() * eb;
    else if (!transpose_a && transpose_b) o.noalias() = ea * eb.transpose();
    else o.noalias() = ea.transpose() * eb.transpose();
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  gemm(a, false, b, false, out, false);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Matrix log_softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

// ---- differentiable ops --------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  Matrix out = matmul(a.value(), b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tape, const Matrix& g) {
    if (tape.requires_grad(a)) gemm(g, false, b.value(), true, tape.grad_buffer(a), true);
    if (tape.requires_grad(b)) gemm(a.value(), true, g, false, tape.grad_buffer(b), true);
  });
}

Var transpose(Var a) {
  return a.tape().record(transpose(a.value()), {a}, [a](Tape& tape, const Matrix& g) {
    tape.accumulate(a, transpose(g));
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Matrix& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var add_row_bias(Var x, Var bias) {
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_mismatch("add_row_bias", xv, bv);
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
  }
  return x.tape().record(std::move(out), {x, bias}, [x, bias](Tape& tape, const Matrix& g) {
    tape.accumulate(x, g);
    if (tape.requires_grad(bias)) {
      Matrix& db = tape.grad_buffer(bias);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db(0, c) += row[c];
      }
    }
  });
}

Var relu(Var x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const Matrix& g) {
    if (!tape.requires_grad(x)) return;
    Matrix& dx = tape.grad_buffer(x);
    auto xv = x.value().data();
    auto gv = g.data();
    auto d = dx.data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv[i] > 0.0) d[i] += gv[i];
  });
}

Var scale(Var x, double factor) {
  Matrix out = x.value();
  for (double& v : out.data()) v *= factor;
  return x.tape().record(std::move(out), {x}, [x, factor](Tape& tape, const Matrix& g) {
    if (!tape.requires_grad(x)) return;
    auto d = tape.grad_buffer(x).data();
    auto gv = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * gv[i];
  });
}

Var div_scalar(Var x, Var s) {
  const Matrix& sv = s.value();
  if (sv.rows() != 1 || sv.cols() != 1) shape_mismatch("div_scalar", x.value(), sv);
  const double denom = sv(0, 0);
  if (denom == 0.0 || !std::isfinite(denom)) {
    throw DomainError("div_scalar: divisor must be finite and nonzero");
  }
  Matrix out = x.value();
  for (double& v : out.data()) v /= denom;
  return x.tape().record(std::move(out), {x, s}, [x, s, denom](Tape& tape, const Matrix& g) {
    auto gv = g.data();
    if (tape.requires_grad(x)) {
      auto d = tape.grad_buffer(x).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] / denom;
    }
    if (tape.requires_grad(s)) {
      auto xv = x.value().data();
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += gv[i] * xv[i];
      tape.grad_buffer(s)(0, 0) += -acc / (denom * denom);
    }
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record(Matrix(1, 1, total), {x}, [x](Tape& tape, const Matrix& g) {
    if (!tape.requires_grad(x)) return;
    const double gv = g(0, 0);
    for (double& d : tape.grad_buffer(x).data()) d += gv;
  });
}

Var softmax_rows(Var z) {
  Matrix p = softmax_rows(z.value());
  return z.tape().record(std::move(p), {z}, [z](Tape& tape, const Matrix& g) {
    const Matrix pm = softmax_rows(z.value());
    Matrix& dz = tape.grad_buffer(z);
    for (std::size_t r = 0; r < pm.rows(); ++r) {
      auto p = pm.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) dot += gr[c] * p[c];
      auto d = dz.row(r);
      for (std::size_t c = 0; c < p.size(); ++c) d[c] += p[c] * (gr[c] - dot);
    }
  });
}

Var log_softmax_rows(Var z) {
  Matrix lp = log_softmax_rows(z.value());
  return z.tape().record(std::move(lp), {z}, [z](Tape& tape, const Matrix& g) {
    const Matrix p = softmax_rows(z.value());
    Matrix& dz = tape.grad_buffer(z);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto gr = g.row(r);
      double gsum = 0.0;
      for (double v : gr) gsum += v;
      auto pr = p.row(r);
      auto d = dz.row(r);
      for (std::size_t c = 0; c < pr.size(); ++c) d[c] += gr[c] - pr[c] * gsum;
    }
  });
}

Var nll(Var log_probs, std::span<const int> labels) {
  const Matrix& lp = log_probs.value();
  check_labels("nll", lp, labels);
  if (lp.rows() == 0) throw UsageError("nll: empty batch");
  const double n = static_cast<double>(lp.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < lp.rows(); ++r) total -= lp(r, static_cast<std::size_t>(labels[r]));
  std::vector<int> ys(labels.begin(), labels.end());
  return log_probs.tape().record(
      Matrix(1, 1, total / n), {log_probs},
      [log_probs, ys = std::move(ys), n](Tape& tape, const Matrix& g) {
        Matrix& d = tape.grad_buffer(log_probs);
        const double gv = g(0, 0) / n;
        for (std::size_t r = 0; r < ys.size(); ++r) d(r, static_cast<std::size_t>(ys[r])) -= gv;
      });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  check_labels("cross_entropy", logits.value(), labels);
  return nll(log_softmax_rows(logits), labels);
}

Var entropy_rows(Var probs) {
  const Matrix& p = probs.value();
  if (p.rows() == 0) throw UsageError("entropy_rows: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double row_sum = 0.0;
    for (double v : p.row(r)) {
      if (v < 0.0) throw DomainError("entropy_rows: negative probability");
      row_sum += v;
      if (v > 0.0) total -= v * std::log(v);
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw DomainError("entropy_rows: row " + std::to_string(r) + " sums to " +
                        std::to_string(row_sum));
    }
  }
  const double n = static_cast<double>(p.rows());
  // Entries equal to 0 get zero gradient (the one-sided derivative is unbounded).
  return probs.tape().record(Matrix(1, 1, total / n), {probs},
                             [probs, n](Tape& tape, const Matrix& g) {
                               auto pv = probs.value().data();
                               auto d = tape.grad_buffer(probs).data();
                               const double gv = g(0, 0) / n;
                               for (std::size_t i = 0; i < pv.size(); ++i)
                                 if (pv[i] > 0.0) d[i] -= gv * (std::log(pv[i]) + 1.0);
                             });
}

Var entropy_from_logits(Var logits) {
  const Matrix& z = logits.value();
  if (z.rows() == 0) throw UsageError("entropy_from_logits: empty batch");
  const Matrix p = softmax_rows(z);
  const Matrix lp = log_softmax_rows(z);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.data()[i] > 0.0) total -= p.data()[i] * lp.data()[i];
  }
  const double n = static_cast<double>(z.rows());
  return logits.tape().record(Matrix(1, 1, total / n), {logits},
                              [logits, n](Tape& tape, const Matrix& g) {
                                const Matrix& zv = logits.value();
                                const Matrix pm = softmax_rows(zv);
                                Matrix& dz = tape.grad_buffer(logits);
                                const double gv = g(0, 0) / n;
                                for (std::size_t r = 0; r < zv.rows(); ++r) {
                                  auto pr = pm.row(r);
                                  auto zr = zv.row(r);
                                  double zbar = 0.0;
                                  for (std::size_t c = 0; c < pr.size(); ++c) zbar += pr[c] * zr[c];
                                  auto d = dz.row(r);
                                  for (std::size_t c = 0; c < pr.size(); ++c)
                                    d[c] -= gv * pr[c] * (zr[c] - zbar);
                                }
                              });
}

Var mean_sq_l2(Var a, Var b) {
  require_same_shape("mean_sq_l2", a.value(), b.value());
  const Matrix& av = a.value();
  if (av.rows() == 0) throw UsageError("mean_sq_l2: empty batch");
  auto x = av.data();
  auto y = b.value().data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    total += d * d;
  }
  const double n = static_cast<double>(av.rows());
  return a.tape().record(Matrix(1, 1, total / n), {a, b}, [a, b, n](Tape& tape, const Matrix& g) {
    auto x = a.value().data();
    auto y = b.value().data();
    const double gv = 2.0 * g(0, 0) / n;
    if (tape.requires_grad(a)) {
      auto d = tape.grad_buffer(a).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv * (x[i] - y[i]);
    }
    if (tape.requires_grad(b)) {
      auto d = tape.grad_buffer(b).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gv * (x[i] - y[i]);
    }
  });
}

}  // namespace contcal
