#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shapeforge/eval.hpp"
#include "shapeforge/train.hpp"

namespace shapeforge {

namespace fs = std::filesystem;

/// The whole experiment in one struct. Its canonical JSON (everything except
/// output location, thread count and mode list) hashes to the run id, which
/// names the run directory; identical configs land in identical directories.
struct RunConfig {
  uint64_t seed = 42;
  int train_n = 2000;
  int test_n = 1000;      // independent clean test split
  int conflict_n = 900;   // cue-conflict test split
  int pairs_m = 500;      // per factor-pair set
  double alpha = 4.0;
  double beta = 1.0;
  double eta = 0.65;
  int grid = 2;
  int epochs = 30;
  double lr = 0.05;
  double momentum = 0.9;
  int batch_size = 50;
  std::string lr_schedule = "step";
  std::string out_dir = "runs";
  std::vector<std::string> modes = {"baseline", "eleas"};
  int threads = 0;  // 0 = auto; SHAPEFORGE_THREADS caps either way
};

inline json config_to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"train_n", c.train_n},
              {"test_n", c.test_n},
              {"conflict_n", c.conflict_n},
              {"pairs_m", c.pairs_m},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"eta", c.eta},
              {"grid", c.grid},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"momentum", c.momentum},
              {"batch_size", c.batch_size},
              {"lr_schedule", c.lr_schedule},
              {"out_dir", c.out_dir},
              {"modes", c.modes},
              {"threads", c.threads}};
}

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("train_n")) c.train_n = j["train_n"].get<int>();
    if (j.contains("test_n")) c.test_n = j["test_n"].get<int>();
    if (j.contains("conflict_n")) c.conflict_n = j["conflict_n"].get<int>();
    if (j.contains("pairs_m")) c.pairs_m = j["pairs_m"].get<int>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("eta")) c.eta = j["eta"].get<double>();
    if (j.contains("grid")) c.grid = j["grid"].get<int>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("momentum")) c.momentum = j["momentum"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr_schedule")) c.lr_schedule = j["lr_schedule"].get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("modes")) c.modes = j["modes"].get<std::vector<std::string>>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

inline void validate_config(const RunConfig& c) {
  if (c.train_n < 1 || c.test_n < 1 || c.conflict_n < 1 || c.pairs_m < 1)
    throw ConfigError("dataset sizes must be >= 1");
  if (!(c.alpha > 0) || !(c.beta > 0)) throw ConfigError("alpha and beta must be > 0");
  if (!(c.eta >= 0 && c.eta <= 1)) throw ConfigError("eta must be in [0,1]");
  if (c.grid < 1 || kImageSize % c.grid != 0)
    throw ConfigError("grid must divide the image size");
  if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(c.lr > 0)) throw ConfigError("lr must be > 0");
  if (!(c.momentum >= 0 && c.momentum < 1)) throw ConfigError("momentum must be in [0,1)");
  if (c.batch_size < 2 || c.batch_size % 2)
    throw ConfigError("batch_size must be even and >= 2");
  if (c.lr_schedule != "step" && c.lr_schedule != "cosine")
    throw ConfigError("lr_schedule must be 'step' or 'cosine'");
  for (const auto& m : c.modes)
    if (m != "baseline" && m != "eleas")
      throw ConfigError("unknown mode '" + m + "'");
}

/// Canonical config: the fields that determine results (not where they are
/// written or how many workers produced them).
inline std::string canonical_config_json(const RunConfig& c) {
  json j = config_to_json(c);
  j.erase("out_dir");
  j.erase("modes");
  j.erase("threads");
  return j.dump();
}

inline std::string run_id(const RunConfig& c) {
  return sha256_hex(canonical_config_json(c)).substr(0, 12);
}

inline fs::path run_dir(const RunConfig& c) {
  return fs::path(c.out_dir) / ("run_" + run_id(c));
}

/// Exclusive advisory lock on a run directory, held for the duration of one
/// command.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw IoError("run directory is locked (remove stale " + path_.string() +
                    " if no other command is running)");
    std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }

 private:
  fs::path path_;
  int fd_ = -1;
};

namespace detail {

/// Record `file -> sha256` entries in the run manifest.
inline void update_run_manifest(const fs::path& dir,
                                const std::vector<std::string>& rel_files) {
  fs::path mpath = dir / "manifest.json";
  json manifest = json::object();
  if (fs::exists(mpath)) manifest = json::parse(read_file(mpath.string()));
  if (!manifest.contains("files")) manifest["files"] = json::object();
  for (const auto& rel : rel_files)
    manifest["files"][rel] = sha256_hex_file((dir / rel).string());
  write_file(mpath.string(), manifest.dump(2) + "\n");
}

inline void write_effective_config(const RunConfig& cfg, const fs::path& dir) {
  json j = config_to_json(cfg);
  j["run_id"] = run_id(cfg);
  write_file((dir / "config.json").string(), j.dump(2) + "\n");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// commands

/// Generate every dataset the experiment needs: the aligned train split, the
/// conflict and independent test splits, and the three factor-pair sets.
inline void cmd_gen(const RunConfig& cfg) {
  validate_config(cfg);
  fs::path dir = run_dir(cfg);
  RunLock lock(dir);
  detail::write_effective_config(cfg, dir);
  int threads = effective_threads(cfg.threads);
  fs::create_directories(dir / "data");

  std::vector<std::string> written;
  auto emit = [&](const std::string& name, DatasetManifest man,
                  const std::vector<SynthSample>& samples) {
    man.split_name = name;
    write_dataset((dir / "data" / (name + ".sfds")).string(), samples, man);
    written.push_back("data/" + name + ".sfds");
    written.push_back("data/" + name + ".sfds.manifest.json");
  };

  auto [man_train, train_samples] =
      generate_split(SplitMode::kAligned, cfg.train_n, cfg.seed, threads);
  emit("train_aligned", man_train, train_samples);
  auto [man_conflict, conflict_samples] =
      generate_split(SplitMode::kConflict, cfg.conflict_n, cfg.seed, threads);
  emit("test_conflict", man_conflict, conflict_samples);
  auto [man_indep, indep_samples] =
      generate_split(SplitMode::kIndependent, cfg.test_n, cfg.seed, threads);
  emit("test_independent", man_indep, indep_samples);

  for (PairKind kind : {PairKind::kSameShape, PairKind::kSameTexture, PairKind::kRandom}) {
    auto pairs = generate_factor_pairs(kind, cfg.pairs_m, cfg.seed, threads);
    std::vector<SynthSample> flat;
    flat.reserve(pairs.size() * 2);
    for (auto& [a, b] : pairs) {
      flat.push_back(std::move(a));
      flat.push_back(std::move(b));
    }
    DatasetManifest man;
    man.mode = to_string(kind);
    man.seed = cfg.seed;
    for (const auto& s : flat) {
      man.shape_class_counts[s.shape_class]++;
      man.texture_class_counts[s.texture_class]++;
    }
    emit("pairs_" + to_string(kind), man, flat);
  }
  written.push_back("config.json");
  detail::update_run_manifest(dir, written);
}

inline std::vector<SynthSample> load_split(const RunConfig& cfg, const std::string& name) {
  return read_dataset((run_dir(cfg) / "data" / (name + ".sfds")).string());
}

inline std::vector<std::pair<SynthSample, SynthSample>> load_pairs(
    const RunConfig& cfg, const std::string& name) {
  auto flat = read_dataset((run_dir(cfg) / "data" / (name + ".sfds")).string());
  if (flat.size() % 2 != 0)
    throw SchemaMismatch("pair dataset " + name + " has odd record count");
  std::vector<std::pair<SynthSample, SynthSample>> pairs(flat.size() / 2);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    pairs[i] = {std::move(flat[2 * i]), std::move(flat[2 * i + 1])};
  return pairs;
}

/// Materialize one epoch-0 augmented set to disk with provenance.
inline DatasetManifest cmd_augment(const RunConfig& cfg, uint64_t epoch = 0) {
  validate_config(cfg);
  fs::path dir = run_dir(cfg);
  auto data = load_split(cfg, "train_aligned");
  RunLock lock(dir);
  AugmentConfig aug{cfg.alpha, cfg.beta, cfg.grid, cfg.seed, std::nullopt};
  std::string name = "augmented_epoch" + std::to_string(epoch);
  fs::create_directories(dir / "augmented");
  auto man = materialize_augmented_set(data, epoch, cfg.train_n, aug,
                                       (dir / "augmented" / (name + ".sfds")).string(),
                                       effective_threads(cfg.threads));
  detail::update_run_manifest(dir, {"augmented/" + name + ".sfds",
                                    "augmented/" + name + ".sfds.manifest.json",
                                    "augmented/" + name + ".sfds.provenance.json"});
  return man;
}

inline TrainConfig trainer_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.eta = cfg.eta;
  tc.lr = cfg.lr;
  tc.momentum = cfg.momentum;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lr_schedule = cfg.lr_schedule;
  tc.seed = cfg.seed;
  tc.aug = AugmentConfig{cfg.alpha, cfg.beta, cfg.grid, cfg.seed, std::nullopt};
  tc.threads = effective_threads(cfg.threads);
  return tc;
}

/// Train one mode; writes checkpoint_<mode>.ckpt and train_<mode>.jsonl.
inline TrainResult cmd_train(const RunConfig& cfg, TrainMode mode) {
  validate_config(cfg);
  fs::path dir = run_dir(cfg);
  auto data = load_split(cfg, "train_aligned");
  RunLock lock(dir);
  TrainResult result = train(data, mode, trainer_config(cfg));

  const std::string mode_name = to_string(mode);
  checkpoint_save(result.params, (dir / ("checkpoint_" + mode_name + ".ckpt")).string());

  std::string log;
  json header{{"record", "header"},       {"mode", mode_name},
              {"eta", cfg.eta},           {"lr", cfg.lr},
              {"momentum", cfg.momentum}, {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size}, {"lr_schedule", cfg.lr_schedule},
              {"seed", cfg.seed},         {"run_id", run_id(cfg)}};
  log += header.dump() + "\n";
  for (const auto& e : result.log) {
    json rec{{"record", "epoch"},      {"epoch", e.epoch},
             {"lr", e.lr},             {"train_loss", e.train_loss},
             {"nat_loss", e.nat_loss}, {"train_acc", e.train_acc}};
    rec["aug_loss"] = std::isfinite(e.aug_loss) ? json(e.aug_loss) : json(nullptr);
    log += rec.dump() + "\n";
  }
  write_file((dir / ("train_" + mode_name + ".jsonl")).string(), log);
  detail::update_run_manifest(dir, {"checkpoint_" + mode_name + ".ckpt",
                                    "train_" + mode_name + ".jsonl"});
  return result;
}

/// Evaluate a trained checkpoint: clean accuracy, cue-conflict shape bias,
/// shape-factor fractions, mask-readout mIoU and the distortion sweeps.
inline MetricsReport cmd_eval(const RunConfig& cfg, TrainMode mode) {
  validate_config(cfg);
  fs::path dir = run_dir(cfg);
  const std::string mode_name = to_string(mode);
  NetParams<float> params =
      checkpoint_load((dir / ("checkpoint_" + mode_name + ".ckpt")).string());
  auto train_split = load_split(cfg, "train_aligned");
  auto conflict = load_split(cfg, "test_conflict");
  auto independent = load_split(cfg, "test_independent");
  auto same_shape = load_pairs(cfg, "pairs_same_shape");
  auto same_texture = load_pairs(cfg, "pairs_same_texture");
  auto random_pairs = load_pairs(cfg, "pairs_random");
  RunLock lock(dir);
  int threads = effective_threads(cfg.threads);

  MetricsReport r;
  r.run_id = run_id(cfg) + "-" + mode_name;
  r.mode = mode_name;
  r.seed = cfg.seed;
  r.clean_acc = accuracy(params, independent);
  r.conflict = shape_bias(params, conflict);
  r.factor = shape_factor(params, same_shape, same_texture, random_pairs);
  FeatureExtractor fe = model_feature_extractor(params);
  ReadoutWeights rw = mask_readout_train(fe, train_split);
  r.miou = mask_readout_eval(fe, rw, independent);
  r.robustness = robustness_sweep(params, independent, all_distortions(),
                                  default_severity_levels(), cfg.seed, threads);

  write_file((dir / ("report_" + mode_name + ".json")).string(),
             report_to_json(r).dump(2) + "\n");
  write_file((dir / ("report_" + mode_name + ".csv")).string(), report_to_csv(r));
  detail::update_run_manifest(dir, {"report_" + mode_name + ".json",
                                    "report_" + mode_name + ".csv"});
  return r;
}

// ---------------------------------------------------------------------------
// report comparison

struct Comparison {
  json table;       // structured deltas
  std::string text; // rendered side-by-side table
};

/// Side-by-side deltas (b - a) of the headline metrics plus per-distortion
/// AUC (mean accuracy over severity levels).
inline Comparison compare_reports(const json& a, const json& b) {
  for (const json* r : {&a, &b}) {
    require_field(*r, {"run_id"});
    require_field(*r, {"mode"});
    require_field(*r, {"clean_acc"});
    require_field(*r, {"conflict", "shape_bias"});
    require_field(*r, {"conflict", "coverage"});
    require_field(*r, {"shape_factor", "shape_fraction"});
    require_field(*r, {"miou"});
    require_field(*r, {"robustness"});
  }
  Comparison cmp;
  json rows = json::array();
  char buf[256];
  std::string text;
  std::snprintf(buf, sizeof buf, "%-28s %12s %12s %12s\n", "metric",
                a["mode"].get<std::string>().c_str(),
                b["mode"].get<std::string>().c_str(), "delta");
  text += buf;
  auto add_row = [&](const std::string& name, double va, double vb) {
    rows.push_back({{"metric", name}, {"a", va}, {"b", vb}, {"delta", vb - va}});
    std::snprintf(buf, sizeof buf, "%-28s %12.4f %12.4f %+12.4f\n", name.c_str(), va,
                  vb, vb - va);
    text += buf;
  };
  add_row("clean_acc", a["clean_acc"].get<double>(), b["clean_acc"].get<double>());
  add_row("shape_bias", a["conflict"]["shape_bias"].get<double>(),
          b["conflict"]["shape_bias"].get<double>());
  add_row("coverage", a["conflict"]["coverage"].get<double>(),
          b["conflict"]["coverage"].get<double>());
  add_row("shape_fraction", a["shape_factor"]["shape_fraction"].get<double>(),
          b["shape_factor"]["shape_fraction"].get<double>());
  add_row("miou", a["miou"].get<double>(), b["miou"].get<double>());

  auto auc_by_kind = [](const json& r) {
    std::map<std::string, double> out;
    for (const auto& curve : r.at("robustness")) {
      const auto& acc = curve.at("acc");
      double mean = 0;
      for (const auto& v : acc) mean += v.get<double>();
      out[curve.at("kind").get<std::string>()] = acc.empty() ? 0.0 : mean / acc.size();
    }
    return out;
  };
  auto auc_a = auc_by_kind(a), auc_b = auc_by_kind(b);
  for (const auto& [kind, va] : auc_a) {
    auto it = auc_b.find(kind);
    if (it == auc_b.end())
      throw SchemaMismatch("report missing field: robustness kind '" + kind + "'");
    add_row("auc_" + kind, va, it->second);
  }

  cmp.table = json{{"a", {{"run_id", a["run_id"]}, {"mode", a["mode"]}}},
                   {"b", {{"run_id", b["run_id"]}, {"mode", b["mode"]}}},
                   {"rows", rows}};
  cmp.text = text;
  return cmp;
}

inline Comparison cmd_compare(const std::string& report_a_path,
                              const std::string& report_b_path) {
  if (!fs::exists(report_a_path)) throw MissingDataset("report not found: " + report_a_path);
  if (!fs::exists(report_b_path)) throw MissingDataset("report not found: " + report_b_path);
  return compare_reports(json::parse(read_file(report_a_path)),
                         json::parse(read_file(report_b_path)));
}

/// The whole experiment: generate data, train and evaluate every configured
/// mode, and when both modes ran, emit the baseline-vs-eleas comparison.
inline void cmd_run_all(const RunConfig& cfg) {
  validate_config(cfg);
  cmd_gen(cfg);
  for (const auto& mode_name : cfg.modes) {
    TrainMode mode = mode_name == "baseline" ? TrainMode::kBaseline : TrainMode::kEleas;
    cmd_train(cfg, mode);
    cmd_eval(cfg, mode);
  }
  fs::path dir = run_dir(cfg);
  if (fs::exists(dir / "report_baseline.json") && fs::exists(dir / "report_eleas.json")) {
    Comparison cmp = cmd_compare((dir / "report_baseline.json").string(),
                                 (dir / "report_eleas.json").string());
    RunLock lock(dir);
    write_file((dir / "comparison.json").string(), cmp.table.dump(2) + "\n");
    write_file((dir / "comparison.txt").string(), cmp.text);
    detail::update_run_manifest(dir, {"comparison.json", "comparison.txt"});
  }
}

}  // namespace shapeforge
