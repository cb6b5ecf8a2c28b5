#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "shapeforge/augment.hpp"
#include "shapeforge/dataset_io.hpp"
#include "shapeforge/model.hpp"

namespace shapeforge {

enum class TrainMode { kBaseline, kEleas };

inline std::string to_string(TrainMode m) {
  return m == TrainMode::kBaseline ? "baseline" : "eleas";
}

struct TrainConfig {
  double eta = 0.65;
  double lr = 0.05;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 50;
  std::string lr_schedule = "step";  // "step": x0.1 at 30/60/90% | "cosine"
  uint64_t seed = 0;
  AugmentConfig aug;
  int threads = 1;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double nat_loss = 0;
  double aug_loss = 0;  // NaN in baseline mode (serialized as null)
  double train_acc = 0;
};

struct TrainResult {
  NetParams<float> params;
  std::vector<EpochLog> log;
};

inline constexpr int kWarmupEpochs = 2;

/// Base rate for an epoch under the configured schedule (before warmup).
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_schedule == "cosine")
    return cfg.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * epoch / cfg.epochs));
  double lr = cfg.lr;
  for (double frac : {0.3, 0.6, 0.9})
    if (epoch >= std::lround(frac * cfg.epochs)) lr *= 0.1;
  return lr;
}

/// Per-step rate: a linear warmup over the first two epochs caps the
/// momentum-amplified early steps, which otherwise kill every ReLU at usable
/// learning rates. Afterwards this is exactly lr_at_epoch.
inline double lr_at_step(const TrainConfig& cfg, int epoch, uint64_t step,
                         std::size_t steps_per_epoch) {
  double lr = lr_at_epoch(cfg, epoch);
  const uint64_t warm = kWarmupEpochs * steps_per_epoch;
  if (cfg.epochs > kWarmupEpochs && warm > 0 && step < warm)
    lr *= static_cast<double>(step + 1) / warm;
  return lr;
}

namespace detail {

inline double split_accuracy(const NetParams<float>& p,
                             const std::vector<SynthSample>& split) {
  ForwardTrace<float> trace;
  std::size_t correct = 0;
  for (const auto& s : split) {
    forward(p, s.image, trace);
    if (argmax_class(trace.logits) == s.shape_class) ++correct;
  }
  return static_cast<double>(correct) / split.size();
}

inline void check_finite(double loss, TrainMode mode, int epoch, uint64_t step) {
  if (!std::isfinite(loss))
    throw DivergedLoss("loss diverged (mode=" + to_string(mode) +
                       ", epoch=" + std::to_string(epoch) +
                       ", step=" + std::to_string(step) + "): " + std::to_string(loss));
}

}  // namespace detail

/// Train the classifier on the natural split. Baseline mode runs plain
/// cross-entropy on full natural batches; eleas mode runs half/half
/// minibatches with the eta-mixed objective, regenerating the augmented pool
/// with epoch-keyed seeds. Deterministic in cfg.seed.
inline TrainResult train(const std::vector<SynthSample>& natural, TrainMode mode,
                         const TrainConfig& cfg) {
  if (natural.empty()) throw EmptyPool("train: natural split is empty");
  if (cfg.batch_size < 2 || cfg.batch_size % 2 != 0)
    throw OddBatchSize("train: batch_size must be even and >= 2");
  if (cfg.epochs < 0) throw ConfigError("train: negative epoch count");

  TrainResult res;
  res.params = init_params<float>(cfg.seed);
  std::vector<float> velocity(NetParams<float>::kTotal, 0.0f);
  const std::size_t n = natural.size();

  std::vector<Image> edge_cache;
  if (mode == TrainMode::kEleas) edge_cache = build_edge_cache(natural, cfg.threads);

  uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    double loss_sum = 0, nat_sum = 0, aug_sum = 0;
    std::size_t steps_in_epoch = 0;

    if (mode == TrainMode::kBaseline) {
      const std::size_t bpe = n / cfg.batch_size;
      if (bpe == 0) throw ConfigError("train: batch_size larger than the dataset");
      auto perm = sample_permutation(
          {cfg.seed, "batch:baseline:" + std::to_string(epoch), 0}, n);
      for (std::size_t pos = 0; pos < bpe; ++pos, ++step, ++steps_in_epoch) {
        std::vector<std::pair<const Image*, int>> batch;
        batch.reserve(cfg.batch_size);
        for (int i = 0; i < cfg.batch_size; ++i) {
          const SynthSample& s = natural[perm[pos * cfg.batch_size + i]];
          batch.emplace_back(&s.image, s.shape_class);
        }
        auto bg = batch_ce_grad(res.params, batch);
        detail::check_finite(bg.loss, mode, epoch, step);
        loss_sum += bg.loss;
        nat_sum += bg.loss;
        sgd_step(res.params, bg.grad, velocity, lr_at_step(cfg, epoch, step, bpe),
                 cfg.momentum);
      }
    } else {
      const std::size_t half = static_cast<std::size_t>(cfg.batch_size) / 2;
      const std::size_t bpe = n / half;
      if (bpe == 0) throw ConfigError("train: batch_size larger than the dataset");
      AugmentConfig aug = cfg.aug;
      aug.root_seed = cfg.seed;
      auto pool = generate_augmented_pool(natural, epoch, n, aug, &edge_cache,
                                          cfg.threads);
      for (std::size_t pos = 0; pos < bpe; ++pos, ++step, ++steps_in_epoch) {
        MiniBatch batch = compose_batch(natural, pool, cfg.batch_size, step, cfg.seed);
        auto ml = mixed_loss(res.params, batch, cfg.eta);
        detail::check_finite(ml.loss, mode, epoch, step);
        loss_sum += ml.loss;
        nat_sum += ml.nat_loss;
        aug_sum += ml.aug_loss;
        sgd_step(res.params, ml.grad, velocity, lr_at_step(cfg, epoch, step, bpe),
                 cfg.momentum);
      }
    }

    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    el.train_loss = loss_sum / steps_in_epoch;
    el.nat_loss = nat_sum / steps_in_epoch;
    el.aug_loss = mode == TrainMode::kEleas
                      ? aug_sum / steps_in_epoch
                      : std::numeric_limits<double>::quiet_NaN();
    el.train_acc = detail::split_accuracy(res.params, natural);
    res.log.push_back(el);
  }
  return res;
}

// ---------------------------------------------------------------------------
// checkpointing: one JSON header line, little-endian f32 payload, then a raw
// 32-byte SHA-256 of everything before it.

inline constexpr uint32_t kCheckpointVersion = 1;

inline void checkpoint_save(const NetParams<float>& p, const std::string& path) {
  json header{{"format", "shapeforge-checkpoint"},
              {"version", kCheckpointVersion},
              {"arch", "conv8-conv16-gap-fc10"},
              {"dtype", "f32"},
              {"param_count", NetParams<float>::kTotal}};
  std::string bytes = header.dump();
  bytes.push_back('\n');
  for (float f : p.v) {
    uint32_t u = std::bit_cast<uint32_t>(f);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &dlen, EVP_sha256(), nullptr);
  bytes.append(reinterpret_cast<const char*>(digest), 32);
  write_file(path, bytes);
}

inline NetParams<float> checkpoint_load(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingDataset("checkpoint not found: " + path);
  std::string bytes = read_file(path);
  auto nl = bytes.find('\n');
  if (nl == std::string::npos || bytes.size() < nl + 1 + 32)
    throw ChecksumMismatch("checkpoint truncated: " + path);

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_Digest(bytes.data(), bytes.size() - 32, digest, &dlen, EVP_sha256(), nullptr);
  if (std::memcmp(digest, bytes.data() + bytes.size() - 32, 32) != 0)
    throw ChecksumMismatch("checkpoint SHA-256 mismatch: " + path);

  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception&) {
    throw VersionMismatch("checkpoint header is not valid JSON: " + path);
  }
  if (header.value("format", "") != "shapeforge-checkpoint" ||
      header.value("version", 0u) != kCheckpointVersion)
    throw VersionMismatch("unsupported checkpoint format/version in " + path);
  const std::size_t declared = header.value("param_count", 0u);
  const std::size_t payload = bytes.size() - nl - 1 - 32;
  if (payload != declared * 4 || declared != NetParams<float>::kTotal)
    throw VersionMismatch("checkpoint declares " + std::to_string(declared) +
                          " params (" + std::to_string(declared * 4) +
                          " bytes) but payload has " + std::to_string(payload) +
                          " bytes");
  NetParams<float> p;
  const auto* q = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for (int i = 0; i < NetParams<float>::kTotal; ++i) {
    uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(q[4 * i + b]) << (8 * b);
    p.v[i] = std::bit_cast<float>(u);
  }
  return p;
}

}  // namespace shapeforge
