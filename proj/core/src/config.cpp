#include "contcal/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "contcal/errors.hpp"

namespace contcal {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Benchmark b) {
  return b == Benchmark::SplitMnist ? "split_mnist" : "synthetic";
}

Benchmark parse_benchmark(const std::string& s) {
  if (s == "split_mnist") return Benchmark::SplitMnist;
  if (s == "synthetic") return Benchmark::Synthetic;
  throw ConfigError("unknown benchmark '" + s + "' (expected split_mnist or synthetic)");
}

std::vector<std::string> list_benchmarks() { return {"split_mnist", "synthetic"}; }

MnistPaths MnistPaths::in_directory(const fs::path& dir) {
  return {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
          dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
}

namespace {

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, _] : obj.items()) {
    if (!keys.contains(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

void ExperimentConfig::validate(bool check_paths) const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (hidden_dim < 1) throw ConfigError("model.hidden_dim must be >= 1");
  strategy.validate();
  calibrator.validate();
  if (strategy.kind == StrategyKind::Joint && calibrator.rc_enabled) {
    throw ConfigError("replayed calibration needs a continual strategy, not joint");
  }
  if (benchmark == Benchmark::SplitMnist) {
    if (!(data.val_fraction > 0.0 && data.val_fraction < 1.0)) {
      throw ConfigError("data.val_fraction must lie in (0, 1)");
    }
    if (data.n_experiences < 1) throw ConfigError("data.n_experiences must be >= 1");
    if (check_paths) {
      for (const fs::path& p : {data.paths.train_images, data.paths.train_labels,
                                data.paths.test_images, data.paths.test_labels}) {
        if (!fs::exists(p)) throw ConfigError("input file not found: " + p.string());
      }
    }
  }
}

ExperimentConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(doc, "config",
                 {"benchmark", "seeds", "out_dir", "strategy", "calibrator", "model", "data",
                  "synthetic"});
  ExperimentConfig cfg;

  std::string s;
  if (doc.contains("benchmark")) {
    read(doc, "benchmark", "config", s);
    cfg.benchmark = parse_benchmark(s);
  }
  read(doc, "seeds", "config", cfg.seeds);
  s = cfg.out_dir.string();
  read(doc, "out_dir", "config", s);
  cfg.out_dir = resolve(base_dir, s);

  if (doc.contains("strategy")) {
    const json& st = doc["strategy"];
    reject_unknown(st, "strategy",
                   {"kind", "alpha", "beta", "memory_size", "epochs", "batch_size", "lr",
                    "optimizer"});
    if (st.contains("kind")) {
      read(st, "kind", "strategy", s);
      cfg.strategy.kind = parse_strategy_kind(s);
    }
    read(st, "alpha", "strategy", cfg.strategy.alpha);
    read(st, "beta", "strategy", cfg.strategy.beta);
    read(st, "memory_size", "strategy", cfg.strategy.memory_size);
    read(st, "epochs", "strategy", cfg.strategy.epochs);
    read(st, "batch_size", "strategy", cfg.strategy.batch_size);
    read(st, "lr", "strategy", cfg.strategy.lr);
    if (st.contains("optimizer")) {
      read(st, "optimizer", "strategy", s);
      cfg.strategy.optimizer = parse_optimizer_kind(s);
    }
  }

  cfg.calibrator.rc_capacity = cfg.strategy.memory_size;
  bool lambda_given = false;
  if (doc.contains("calibrator")) {
    const json& ca = doc["calibrator"];
    reject_unknown(ca, "calibrator",
                   {"kind", "lr", "iterations", "hr_lambda", "rc_enabled", "rc_capacity"});
    if (ca.contains("kind")) {
      read(ca, "kind", "calibrator", s);
      cfg.calibrator.kind = parse_calibrator_kind(s);
    }
    read(ca, "lr", "calibrator", cfg.calibrator.lr);
    read(ca, "iterations", "calibrator", cfg.calibrator.iterations);
    lambda_given = ca.contains("hr_lambda");
    read(ca, "hr_lambda", "calibrator", cfg.calibrator.hr_lambda);
    read(ca, "rc_enabled", "calibrator", cfg.calibrator.rc_enabled);
    read(ca, "rc_capacity", "calibrator", cfg.calibrator.rc_capacity);
  }
  if (cfg.calibrator.kind == CalibratorKind::HR && !lambda_given) {
    cfg.calibrator.hr_lambda = default_hr_lambda(cfg.strategy.kind);
  }

  if (doc.contains("model")) {
    reject_unknown(doc["model"], "model", {"hidden_dim"});
    read(doc["model"], "hidden_dim", "model", cfg.hidden_dim);
  }

  cfg.data.paths = MnistPaths::in_directory(resolve(base_dir, "data/mnist"));
  if (doc.contains("data")) {
    const json& d = doc["data"];
    reject_unknown(d, "data", {"mnist_dir", "paths", "val_fraction", "class_order", "n_experiences"});
    if (d.contains("mnist_dir")) {
      read(d, "mnist_dir", "data", s);
      cfg.data.paths = MnistPaths::in_directory(resolve(base_dir, s));
    }
    if (d.contains("paths")) {
      const json& p = d["paths"];
      reject_unknown(p, "data.paths", {"train_images", "train_labels", "test_images", "test_labels"});
      auto path_key = [&](const char* key, fs::path& out) {
        if (!p.contains(key)) return;
        std::string v;
        read(p, key, "data.paths", v);
        out = resolve(base_dir, v);
      };
      path_key("train_images", cfg.data.paths.train_images);
      path_key("train_labels", cfg.data.paths.train_labels);
      path_key("test_images", cfg.data.paths.test_images);
      path_key("test_labels", cfg.data.paths.test_labels);
    }
    read(d, "val_fraction", "data", cfg.data.val_fraction);
    read(d, "class_order", "data", cfg.data.class_order);
    read(d, "n_experiences", "data", cfg.data.n_experiences);
  }

  if (doc.contains("synthetic")) {
    const json& sy = doc["synthetic"];
    reject_unknown(sy, "synthetic",
                   {"n_classes", "dim", "n_train_per_class", "n_val_per_class",
                    "n_test_per_class", "class_means_scale", "n_experiences"});
    read(sy, "n_classes", "synthetic", cfg.synthetic.n_classes);
    read(sy, "dim", "synthetic", cfg.synthetic.dim);
    read(sy, "n_train_per_class", "synthetic", cfg.synthetic.n_train_per_class);
    read(sy, "n_val_per_class", "synthetic", cfg.synthetic.n_val_per_class);
    read(sy, "n_test_per_class", "synthetic", cfg.synthetic.n_test_per_class);
    read(sy, "class_means_scale", "synthetic", cfg.synthetic.class_means_scale);
    read(sy, "n_experiences", "synthetic", cfg.synthetic.n_experiences);
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::string to_json_text(const ExperimentConfig& cfg) {
  json doc;
  doc["benchmark"] = to_string(cfg.benchmark);
  doc["seeds"] = cfg.seeds;
  doc["out_dir"] = cfg.out_dir.string();
  doc["strategy"] = {{"kind", to_string(cfg.strategy.kind)},
                     {"alpha", cfg.strategy.alpha},
                     {"beta", cfg.strategy.beta},
                     {"memory_size", cfg.strategy.memory_size},
                     {"epochs", cfg.strategy.epochs},
                     {"batch_size", cfg.strategy.batch_size},
                     {"lr", cfg.strategy.lr},
                     {"optimizer", to_string(cfg.strategy.optimizer)}};
  doc["calibrator"] = {{"kind", to_string(cfg.calibrator.kind)},
                       {"lr", cfg.calibrator.lr},
                       {"iterations", cfg.calibrator.iterations},
                       {"hr_lambda", cfg.calibrator.hr_lambda},
                       {"rc_enabled", cfg.calibrator.rc_enabled},
                       {"rc_capacity", cfg.calibrator.rc_capacity}};
  doc["model"] = {{"hidden_dim", cfg.hidden_dim}};
  doc["data"] = {{"paths",
                  {{"train_images", cfg.data.paths.train_images.string()},
                   {"train_labels", cfg.data.paths.train_labels.string()},
                   {"test_images", cfg.data.paths.test_images.string()},
                   {"test_labels", cfg.data.paths.test_labels.string()}}},
                 {"val_fraction", cfg.data.val_fraction},
                 {"class_order", cfg.data.class_order},
                 {"n_experiences", cfg.data.n_experiences}};
  doc["synthetic"] = {{"n_classes", cfg.synthetic.n_classes},
                      {"dim", cfg.synthetic.dim},
                      {"n_train_per_class", cfg.synthetic.n_train_per_class},
                      {"n_val_per_class", cfg.synthetic.n_val_per_class},
                      {"n_test_per_class", cfg.synthetic.n_test_per_class},
                      {"class_means_scale", cfg.synthetic.class_means_scale},
                      {"n_experiences", cfg.synthetic.n_experiences}};
  return doc.dump(2);
}

}  // namespace contcal
