#pragma once

// Dense row-major matrices and a dynamic reverse-mode tape.
//
// A Tape records every differentiable operation executed through Var handles.
// Calling backward() on a 1x1 loss walks the record in reverse exactly once and
// accumulates gradients into the Params that were bound with Tape::param().
// Gradients are never zeroed implicitly; see zero_grads().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace contcal {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  std::string shape() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A trainable tensor. Copies receive a fresh id so optimizer state is never shared
// between an original and its snapshot.
class Param {
 public:
  explicit Param(Matrix value);
  Param(const Param& other);
  Param& operator=(const Param& other);
  Param(Param&&) noexcept = default;
  Param& operator=(Param&&) noexcept = default;

  std::uint64_t id() const noexcept { return id_; }

  Matrix value;
  Matrix grad;

 private:
  std::uint64_t id_;
};

void zero_grads(std::span<Param* const> params);

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the Tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
  Tape& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  // Receives the gradient flowing into this node's output.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Param& p);

  // Populates the grads of every Param reachable from `loss`. Accumulates.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Operation-author API.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  bool requires_grad(Var v) const;
  const Matrix& value_of(std::size_t index) const { return nodes_[index].value; }
  // Adds `g` into the node gradient of `v` (no-op when v does not require grad).
  void accumulate(Var v, const Matrix& g);
  // Mutable gradient buffer of `v`, allocated on first use. Only valid if requires_grad(v).
  Matrix& grad_buffer(Var v);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

// ---- differentiable operations -------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var add_row_bias(Var x, Var bias);
Var relu(Var x);
Var scale(Var x, double factor);
// Divides every entry of x by the 1x1 value s.
Var div_scalar(Var x, Var s);
Var sum(Var x);
Var softmax_rows(Var z);
Var log_softmax_rows(Var z);
// Mean over rows of -logp[row, label].
Var nll(Var log_probs, std::span<const int> labels);
// nll(log_softmax_rows(logits), labels).
Var cross_entropy(Var logits, std::span<const int> labels);
// Mean over rows of -sum p log p with 0 log 0 = 0. Rows must sum to 1 within 1e-6.
Var entropy_rows(Var probs);
// entropy_rows(softmax_rows(z)) computed directly from logits.
Var entropy_from_logits(Var logits);
// Mean over rows of the squared Euclidean distance between matching rows.
Var mean_sq_l2(Var a, Var b);

// ---- plain (non-recorded) numerics ---------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix softmax_rows(const Matrix& z);
Matrix log_softmax_rows(const Matrix& z);
// Index of the largest entry per row; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Matrix& m);

// out (+)= op(a) * op(b); the Eigen-backed kernel shared by both paths.
void gemm(const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b, Matrix& out,
          bool accumulate);

}  // namespace contcal
