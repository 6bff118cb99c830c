#include "contcal/calibration.hpp"

#include <cmath>
#include <cstring>

#include "contcal/errors.hpp"
#include "contcal/log.hpp"
#include "contcal/metrics.hpp"
#include "contcal/optim.hpp"

namespace contcal {

std::string to_string(CalibratorKind k) {
  switch (k) {
    case CalibratorKind::None: return "none";
    case CalibratorKind::TS: return "ts";
    case CalibratorKind::VS: return "vs";
    case CalibratorKind::MS: return "ms";
    case CalibratorKind::HR: return "hr";
  }
  return "?";
}

CalibratorKind parse_calibrator_kind(const std::string& s) {
  if (s == "none") return CalibratorKind::None;
  if (s == "ts") return CalibratorKind::TS;
  if (s == "vs") return CalibratorKind::VS;
  if (s == "ms") return CalibratorKind::MS;
  if (s == "hr") return CalibratorKind::HR;
  throw ConfigError("unknown calibrator '" + s + "' (expected none, ts, vs, ms or hr)");
}

std::string CalibratorConfig::label() const {
  return to_string(kind) + (rc_enabled ? "+rc" : "");
}

void CalibratorConfig::validate() const {
  if (post_processing()) {
    if (iterations < 1) throw ConfigError("calibrator: iterations must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("calibrator: lr must be positive");
    if (hr_lambda != 0.0) {
      throw ConfigError("calibrator: entropy regularization cannot be combined with " +
                        to_string(kind));
    }
  }
  if (!(hr_lambda >= 0.0)) throw ConfigError("calibrator: hr_lambda must be >= 0");
  if (kind == CalibratorKind::None && hr_lambda != 0.0) {
    throw ConfigError("calibrator: hr_lambda is only used with kind hr");
  }
  if (rc_enabled && !post_processing()) {
    throw ConfigError("calibrator: replayed calibration needs ts, vs or ms");
  }
}

double default_hr_lambda(StrategyKind strategy) {
  switch (strategy) {
    case StrategyKind::Joint: return 0.0075;
    case StrategyKind::DerPP: return 0.005;
    case StrategyKind::Replay: return 0.025;
    case StrategyKind::Naive: return 0.075;
  }
  return 0.0;
}

void rc_update(RcBuffer& buf, const LabeledDataset& val, int experience_id) {
  if (val.split != Split::Val) {
    throw ProvenanceError("rc_update: only validation examples may enter the calibration buffer (got " +
                          to_string(val.split) + ")");
  }
  for (std::size_t r = 0; r < val.size(); ++r) {
    BufferItem item;
    auto x = val.inputs.row(r);
    item.x.assign(x.begin(), x.end());
    item.y = val.labels[r];
    item.experience = experience_id;
    item.split = Split::Val;
    item.origin = val.origin[r];
    buf.buffer_.insert(std::move(item));
  }
}

namespace {

// Runs `iterations` of full-batch GD on the head alone; `z` are cached base logits.
FitResult fit_head(CalibrationHead& head, const Matrix& z, std::span<const int> labels, double lr,
                   int iterations) {
  FitResult r;
  r.initial_nll = mean_nll(head.apply(z), labels);
  std::vector<Param*> params = head.parameters();
  for (int it = 0; it < iterations; ++it) {
    zero_grads(params);
    Tape tape;
    Var loss = cross_entropy(head.apply(tape.constant(z)), labels);
    tape.backward(loss);
    head.mask_gradients();
    sgd_step(params, lr);
    if (head.project()) ++r.clamps;
  }
  r.final_nll = mean_nll(head.apply(z), labels);
  return r;
}

void check_fit_args(double lr, int iterations) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("calibration lr must be positive");
  if (iterations < 0) throw ConfigError("calibration iterations must be >= 0");
}

}  // namespace

FitResult fit_temperature(CalibratedModel& cm, const CalibrationSet& cal, double lr,
                          int iterations) {
  check_fit_args(lr, iterations);
  if (cal.empty()) {
    warn("fit_temperature: empty calibration set, skipping");
    return FitResult{true, 0.0, 0.0, 0};
  }
  if (cm.head.kind() == HeadKind::Affine) {
    throw UsageError("fit_temperature: model already carries an affine head");
  }
  if (cm.head.is_identity()) cm.head = CalibrationHead::temperature(1.0);
  const Matrix z = forward_logits(cm.base, cal.inputs);
  return fit_head(cm.head, z, cal.labels, lr, iterations);
}

FitResult fit_affine(CalibratedModel& cm, const CalibrationSet& cal, double lr, int iterations,
                     bool diagonal_only) {
  check_fit_args(lr, iterations);
  if (cal.empty()) {
    warn("fit_affine: empty calibration set, skipping");
    return FitResult{true, 0.0, 0.0, 0};
  }
  if (cm.head.kind() == HeadKind::Temperature) {
    throw UsageError("fit_affine: model already carries a temperature head");
  }
  if (cm.head.is_identity()) cm.head = CalibrationHead::affine(cm.n_classes(), diagonal_only);
  if (cm.head.as_affine().diagonal_only != diagonal_only) {
    throw UsageError("fit_affine: head diagonal constraint does not match the request");
  }
  const Matrix z = forward_logits(cm.base, cal.inputs);
  return fit_head(cm.head, z, cal.labels, lr, iterations);
}

namespace {

CalibrationSet build_calibration_set(const Experience& exp, const RcBuffer* buffer) {
  require_not_test(exp.val, "calibrate_after_experience");
  CalibrationSet cal;
  const std::size_t extra = buffer ? buffer->size() : 0;
  const std::size_t dim = exp.val.dim();
  cal.inputs = Matrix(exp.val.size() + extra, dim);
  auto dst = cal.inputs.data();
  auto src = exp.val.inputs.data();
  std::copy(src.begin(), src.end(), dst.begin());
  cal.labels = exp.val.labels;
  cal.provenance.assign(exp.val.size(), exp.id);
  if (buffer) {
    std::size_t r = exp.val.size();
    for (const BufferItem& item : buffer->reservoir().items()) {
      if (item.split != Split::Val) throw ProvenanceError("calibration buffer holds a non-validation example");
      if (item.x.size() != dim) throw DimensionError("calibration buffer item dimension mismatch");
      std::memcpy(cal.inputs.row(r++).data(), item.x.data(), dim * sizeof(double));
      cal.labels.push_back(item.y);
      cal.provenance.push_back(item.experience);
    }
  }
  return cal;
}

}  // namespace

CalibrationReport calibrate_after_experience(CalibratedModel& cm, const Experience& exp,
                                             const RcBuffer* buffer, const CalibratorConfig& cfg) {
  cfg.validate();
  CalibrationReport rep;
  rep.experience = exp.id;
  rep.kind = cfg.kind;
  rep.rc = cfg.rc_enabled;
  const RcBuffer* rc = cfg.rc_enabled ? buffer : nullptr;
  rep.buffer_size = rc ? rc->size() : 0;

  if (!cfg.post_processing()) return rep;

  const CalibrationSet cal = build_calibration_set(exp, rc);
  rep.n_examples = cal.size();
  if (cal.empty()) {
    warn("calibrate_after_experience: experience " + std::to_string(exp.id) +
         " has no validation data, skipping calibration");
    return rep;
  }

  auto measure = [&](double& nll, double& ece_out) {
    const ModelOutput out = predict(cm, cal.inputs);
    const Scores s = score(out, cal.labels);
    nll = s.nll;
    ece_out = s.ece;
  };
  measure(rep.pre_nll, rep.pre_ece);

  FitResult fit;
  if (cfg.kind == CalibratorKind::TS) {
    fit = fit_temperature(cm, cal, cfg.lr, cfg.iterations);
    rep.fitted = cm.head.as_temperature().t.value(0, 0);
  } else {
    fit = fit_affine(cm, cal, cfg.lr, cfg.iterations, cfg.kind == CalibratorKind::VS);
    const AffineHead& a = cm.head.as_affine();
    double sq = 0.0;
    for (std::size_t r = 0; r < a.w.value.rows(); ++r)
      for (std::size_t c = 0; c < a.w.value.cols(); ++c) {
        const double d = a.w.value(r, c) - (r == c ? 1.0 : 0.0);
        sq += d * d;
      }
    rep.fitted = std::sqrt(sq);
  }
  rep.skipped = fit.skipped;
  measure(rep.post_nll, rep.post_ece);
  return rep;
}

}  // namespace contcal
