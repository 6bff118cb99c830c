#include "contcal/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

#include "contcal/checkpoint.hpp"
#include "contcal/errors.hpp"
#include "contcal/idx.hpp"
#include "contcal/rng.hpp"

namespace contcal {

namespace fs = std::filesystem;

RunError::RunError(std::uint64_t seed, std::string module, std::string phase,
                   const std::string& what, bool config_error)
    : std::runtime_error("seed " + std::to_string(seed) + ": " + module + "/" + phase + ": " + what),
      seed_(seed),
      module_(std::move(module)),
      phase_(std::move(phase)),
      config_error_(config_error) {}

namespace {

// Salts for the per-subsystem generators forked from the seed.
enum Salt : std::uint64_t { kSplit = 1, kInit = 2, kBatches = 3, kMemory = 4, kRcMemory = 5 };

template <typename F>
auto guarded(std::uint64_t seed, const char* module, const std::string& phase, F&& f) {
  try {
    return f();
  } catch (const RunError&) {
    throw;
  } catch (const ConfigError& e) {
    throw RunError(seed, module, phase, e.what(), true);
  } catch (const std::exception& e) {
    throw RunError(seed, module, phase, e.what(), false);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.8f", v);
  return buf;
}

void open_out(std::ofstream& f, const fs::path& p) {
  f.open(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

std::string git_blob_sha1(std::span<const std::uint8_t> bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw std::runtime_error("sha1 digest failed");
  }
  std::string hex;
  char b[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

DataSource load_data_source(const ExperimentConfig& cfg) {
  DataSource d;
  if (cfg.benchmark != Benchmark::SplitMnist) return d;
  const MnistPaths& p = cfg.data.paths;
  auto load = [&](const fs::path& images, const fs::path& labels, Split split) {
    const auto ib = idx::read_file(images);
    const auto lb = idx::read_file(labels);
    d.input_hashes.emplace_back(images.string(), git_blob_sha1(ib));
    d.input_hashes.emplace_back(labels.string(), git_blob_sha1(lb));
    return idx::to_dataset(idx::parse_images(ib), idx::parse_labels(lb), split);
  };
  d.train_pool = load(p.train_images, p.train_labels, Split::Train);
  d.test_pool = load(p.test_images, p.test_labels, Split::Test);
  return d;
}

Stream build_stream(const ExperimentConfig& cfg, const DataSource& data, std::uint64_t seed) {
  const std::uint64_t split_seed = SeededRng(seed).fork(kSplit).seed();
  if (cfg.benchmark == Benchmark::Synthetic) {
    return make_synthetic_gaussian_stream(cfg.synthetic, split_seed);
  }
  return make_class_incremental(data.train_pool, data.test_pool, cfg.data.n_experiences,
                                cfg.data.class_order, cfg.data.val_fraction, split_seed);
}

SeedResult run_seed(const ExperimentConfig& cfg, const Stream& stream, std::uint64_t seed) {
  guarded(seed, "harness", "validate", [&] {
    cfg.strategy.validate();
    cfg.calibrator.validate();
    stream.validate();
    return 0;
  });
  SeededRng master(seed);
  const std::uint64_t init_seed = master.fork(kInit).seed();
  SeededRng batch_rng = master.fork(kBatches);
  const std::uint64_t memory_seed = master.fork(kMemory).seed();
  const std::uint64_t rc_seed = master.fork(kRcMemory).seed();

  const std::size_t in_dim = stream.experiences.front().train.dim();
  SeedResult res;
  res.seed = seed;
  res.model = guarded(seed, "model", "init", [&] {
    return CalibratedModel{init_mlp(in_dim, cfg.hidden_dim,
                                    static_cast<std::size_t>(stream.total_classes), init_seed),
                           CalibrationHead::identity()};
  });
  CalibratedModel& cm = res.model;

  auto optimizer = guarded(seed, "numcore", "optimizer",
                           [&] { return make_optimizer(cfg.strategy.optimizer, cfg.strategy.lr); });
  std::unique_ptr<ReservoirBuffer> memory;
  if (cfg.strategy.uses_buffer()) {
    memory = std::make_unique<ReservoirBuffer>(cfg.strategy.memory_size, memory_seed);
  }
  std::unique_ptr<RcBuffer> rc;
  if (cfg.calibrator.rc_enabled) rc = std::make_unique<RcBuffer>(cfg.calibrator.rc_capacity, rc_seed);
  const std::optional<double> hr =
      cfg.calibrator.kind == CalibratorKind::HR ? std::optional<double>(cfg.calibrator.hr_lambda)
                                                : std::nullopt;

  const bool joint = cfg.strategy.kind == StrategyKind::Joint;
  const std::string strategy = to_string(cfg.strategy.kind);
  const std::string calibrator = cfg.calibrator.label();
  const std::size_t n_steps = joint ? 1 : stream.size();
  Experience joint_exp;
  if (joint) joint_exp = guarded(seed, "strategies", "joint", [&] { return joint_experience(stream); });

  for (std::size_t step = 0; step < n_steps; ++step) {
    const Experience& exp = joint ? joint_exp : stream.experiences[step];
    const std::string at = "@experience" + std::to_string(exp.id);
    StepTiming timing{static_cast<int>(step), 0.0, 0.0, 0.0};

    auto t0 = std::chrono::steady_clock::now();
    res.training.push_back(guarded(seed, "strategies", "train" + at, [&] {
      require_not_test(exp.train, "train_experience");
      if (joint) return train_joint(cm, stream, cfg.strategy, *optimizer, batch_rng, hr);
      return train_experience(cm, exp, cfg.strategy, *optimizer, batch_rng, hr, memory.get());
    }));
    timing.train_seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    res.calibrations.push_back(guarded(seed, "calibration", "calibrate" + at, [&] {
      return calibrate_after_experience(cm, exp, rc.get(), cfg.calibrator);
    }));
    if (rc) {
      guarded(seed, "calibration", "rc_update" + at, [&] {
        rc_update(*rc, exp.val, exp.id);
        return 0;
      });
    }
    timing.calibrate_seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    StreamEvaluation ev =
        guarded(seed, "metrics", "evaluate" + at, [&] { return evaluate_stream(cm, stream); });
    timing.evaluate_seconds = seconds_since(t0);

    const std::string trained = joint ? "joint" : std::to_string(exp.id);
    auto emit = [&](const std::string& target, const Scores& s) {
      res.records.push_back(RunRecord{seed, strategy, calibrator, static_cast<int>(step), trained,
                                      target, s.n, s.accuracy, s.ece, s.nll,
                                      timing.train_seconds + timing.calibrate_seconds});
    };
    for (std::size_t e = 0; e < ev.per_experience.size(); ++e) {
      emit(std::to_string(stream.experiences[e].id), ev.per_experience[e]);
    }
    emit("stream", ev.pooled);
    res.timing.push_back(timing);
    res.final_eval = std::move(ev);
  }
  return res;
}

void write_results_csv(std::ostream& out, std::span<const RunRecord> records) {
  out << kResultsHeader << '\n';
  for (const RunRecord& r : records) {
    out << r.seed << ',' << r.strategy << ',' << r.calibrator << ',' << r.step << ','
        << r.trained_experience << ',' << r.eval_target << ',' << r.n_examples << ','
        << fmt(r.accuracy) << ',' << fmt(r.ece) << ',' << fmt(r.nll) << '\n';
  }
}

void write_seed_outputs(const ExperimentConfig& cfg, const DataSource& data,
                        const SeedResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream f;
  const std::string s = std::to_string(result.seed);

  open_out(f, dir / "results.csv");
  write_results_csv(f, result.records);
  f.close();

  open_out(f, dir / ("reliability_" + to_string(cfg.strategy.kind) + "_" + cfg.calibrator.label() +
                     "_" + s + ".csv"));
  write_reliability_csv(f, result.final_eval.pooled.diagram);
  f.close();

  open_out(f, dir / "calibration.csv");
  f << "seed,experience,kind,rc,skipped,n_examples,buffer_size,pre_nll,post_nll,pre_ece,post_ece,"
       "fitted\n";
  for (const CalibrationReport& c : result.calibrations) {
    f << s << ',' << c.experience << ',' << to_string(c.kind) << ',' << (c.rc ? 1 : 0) << ','
      << (c.skipped ? 1 : 0) << ',' << c.n_examples << ',' << c.buffer_size << ','
      << fmt(c.pre_nll) << ',' << fmt(c.post_nll) << ',' << fmt(c.pre_ece) << ','
      << fmt(c.post_ece) << ',' << fmt(c.fitted) << '\n';
  }
  f.close();

  open_out(f, dir / "train_log.csv");
  f << "seed,step,epoch,loss,ce,distill_alpha,ce_beta,hr,temperature_clamps\n";
  for (std::size_t step = 0; step < result.training.size(); ++step) {
    const TrainReport& t = result.training[step];
    for (std::size_t e = 0; e < t.epoch_loss.size(); ++e) {
      const LossTerms& lt = t.epoch_terms[e];
      f << s << ',' << step << ',' << e << ',' << fmt(t.epoch_loss[e]) << ',' << fmt(lt.ce) << ','
        << fmt(lt.distill_alpha) << ',' << fmt(lt.ce_beta) << ',' << fmt(lt.hr) << ','
        << t.temperature_clamps << '\n';
    }
  }
  f.close();

  // Wall time lives apart from results.csv so that file stays byte-deterministic.
  open_out(f, dir / "timing.csv");
  f << "seed,step,train_seconds,calibrate_seconds,evaluate_seconds\n";
  for (const StepTiming& t : result.timing) {
    f << s << ',' << t.step << ',' << fmt(t.train_seconds) << ',' << fmt(t.calibrate_seconds) << ','
      << fmt(t.evaluate_seconds) << '\n';
  }
  f.close();

  open_out(f, dir / "meta.txt");
  f << "seed=" << s << '\n';
  f << "rng_algorithm=" << SeededRng::kAlgorithm << '\n';
  for (const auto& [path, sha] : data.input_hashes) f << "input_sha1 " << sha << ' ' << path << '\n';
  f << "config=\n" << to_json_text(cfg) << '\n';
  f.close();

  save_checkpoint(dir / "model.ckpt", result.model);
}

int run_experiment(const ExperimentConfig& cfg, int jobs, std::ostream& log) {
  std::mutex log_mu;
  auto say = [&](const std::string& line) {
    std::lock_guard lock(log_mu);
    log << line << '\n';
  };

  DataSource data;
  try {
    cfg.validate();
    data = load_data_source(cfg);
  } catch (const ConfigError& e) {
    say(std::string("error: harness/setup: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    say(std::string("error: datastream/load: ") + e.what());
    return 2;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> status{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      const std::uint64_t seed = cfg.seeds[i];
      try {
        const Stream stream =
            guarded(seed, "datastream", "build_stream", [&] { return build_stream(cfg, data, seed); });
        const SeedResult res = run_seed(cfg, stream, seed);
        const fs::path dir = cfg.out_dir / ("seed_" + std::to_string(seed));
        guarded(seed, "harness", "write", [&] {
          write_seed_outputs(cfg, data, res, dir);
          return 0;
        });
        const Scores& p = res.final_eval.pooled;
        say("seed " + std::to_string(seed) + ": accuracy " + fmt(p.accuracy) + " ece " +
            fmt(p.ece) + " nll " + fmt(p.nll) + " -> " + dir.string());
      } catch (const RunError& e) {
        say(std::string("error: ") + e.what());
        int want = e.config_error() ? 1 : 2;
        int cur = status.load();
        while (want > cur && !status.compare_exchange_weak(cur, want)) {
        }
      }
    }
  };

  const std::size_t n_workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, cfg.seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return status.load();
}

}  // namespace contcal
