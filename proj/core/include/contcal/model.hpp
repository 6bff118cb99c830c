#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "contcal/numcore.hpp"

namespace contcal {

// relu(X W1 + b1) W2 + b2.  W1: in x hidden, W2: hidden x classes, biases are row vectors.
struct MlpClassifier {
  std::size_t in_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t n_classes = 0;
  Param w1{Matrix()};
  Param b1{Matrix()};
  Param w2{Matrix()};
  Param b2{Matrix()};

  std::vector<Param*> parameters();
};

// Glorot-uniform weights, zero biases.
MlpClassifier init_mlp(std::size_t in_dim, std::size_t hidden_dim, std::size_t n_classes,
                       std::uint64_t seed);

Var forward_logits(MlpClassifier& m, Var x);
Matrix forward_logits(const MlpClassifier& m, const Matrix& x);

inline constexpr double kMinTemperature = 1e-3;

enum class HeadKind { Identity, Temperature, Affine };

std::string to_string(HeadKind k);

struct IdentityHead {};

struct TemperatureHead {
  Param t{Matrix(1, 1, 1.0)};
};

struct AffineHead {
  Param w{Matrix()};
  Param b{Matrix()};
  bool diagonal_only = false;
};

class CalibrationHead {
 public:
  CalibrationHead() = default;

  static CalibrationHead identity();
  static CalibrationHead temperature(double t);
  // W = I, b = 0.
  static CalibrationHead affine(std::size_t n_classes, bool diagonal_only);

  HeadKind kind() const;
  bool is_identity() const { return kind() == HeadKind::Identity; }

  TemperatureHead& as_temperature() { return std::get<TemperatureHead>(head_); }
  const TemperatureHead& as_temperature() const { return std::get<TemperatureHead>(head_); }
  AffineHead& as_affine() { return std::get<AffineHead>(head_); }
  const AffineHead& as_affine() const { return std::get<AffineHead>(head_); }

  std::vector<Param*> parameters();

  // Zeroes gradients that must not move constrained entries (off-diagonal W for VS).
  void mask_gradients();
  // Restores invariants after an optimizer step: T >= kMinTemperature, and off-diagonal
  // W entries exactly zero when diagonal_only. Returns true if the temperature was clamped.
  bool project();

  Var apply(Var z);
  Matrix apply(const Matrix& z) const;

 private:
  std::variant<IdentityHead, TemperatureHead, AffineHead> head_;
};

struct CalibratedModel {
  MlpClassifier base;
  CalibrationHead head;

  std::size_t n_classes() const { return base.n_classes; }
  std::vector<Param*> parameters();
  // Post-head logits on the tape.
  Var logits(Tape& tape, const Matrix& x);
};

struct ModelOutput {
  Matrix logits;
  Matrix probs;
  std::vector<int> predicted;
  std::vector<double> confidence;
};

// probs = softmax(logits); predicted = argmax (lowest index on ties); confidence = max prob.
ModelOutput output_from_logits(Matrix logits);
ModelOutput predict(const CalibratedModel& cm, const Matrix& x);

}  // namespace contcal
