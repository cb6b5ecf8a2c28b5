#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shapeforge/dataset_io.hpp"
#include "shapeforge/model.hpp"
#include "shapeforge/parallel.hpp"
#include "shapeforge/synth.hpp"

namespace shapeforge {

using PredictFn = std::function<int(const Image&)>;

inline PredictFn model_predictor(const NetParams<float>& p) {
  return [&p](const Image& img) {
    ForwardTrace<float> t;
    forward(p, img, t);
    return argmax_class(t.logits);
  };
}

/// Fraction of samples whose predicted class equals shape_class.
inline double accuracy(const PredictFn& predict, const std::vector<SynthSample>& split) {
  if (split.empty()) throw EmptySplit("accuracy: empty split");
  std::size_t correct = 0;
  for (const auto& s : split)
    if (predict(s.image) == s.shape_class) ++correct;
  return static_cast<double>(correct) / split.size();
}

inline double accuracy(const NetParams<float>& p, const std::vector<SynthSample>& split) {
  return accuracy(model_predictor(p), split);
}

// ---------------------------------------------------------------------------
// cue-conflict shape bias

struct ShapeBiasResult {
  struct Counts {
    int shape_correct = 0;
    int texture_correct = 0;
    int neither = 0;
  };
  int shape_correct = 0;
  int texture_correct = 0;
  int neither = 0;
  double shape_bias = 0;  // shape_correct / (shape_correct + texture_correct)
  double coverage = 0;    // fraction predicting either cue
  std::array<Counts, kNumClasses> per_class{};  // keyed by shape_class
};

/// On a conflict split, count predictions that hit the shape label, the
/// texture label, or neither.
inline ShapeBiasResult shape_bias(const PredictFn& predict,
                                  const std::vector<SynthSample>& conflict_split) {
  if (conflict_split.empty()) throw EmptySplit("shape_bias: empty split");
  for (const auto& s : conflict_split)
    if (s.shape_class == s.texture_class)
      throw NotConflictSplit("shape_bias: record with shape_class == texture_class");
  ShapeBiasResult r;
  for (const auto& s : conflict_split) {
    int pred = predict(s.image);
    auto& pc = r.per_class[s.shape_class];
    if (pred == s.shape_class) {
      r.shape_correct++;
      pc.shape_correct++;
    } else if (pred == s.texture_class) {
      r.texture_correct++;
      pc.texture_correct++;
    } else {
      r.neither++;
      pc.neither++;
    }
  }
  int covered = r.shape_correct + r.texture_correct;
  r.shape_bias = covered > 0 ? static_cast<double>(r.shape_correct) / covered : 0.0;
  r.coverage = static_cast<double>(covered) / conflict_split.size();
  return r;
}

inline ShapeBiasResult shape_bias(const NetParams<float>& p,
                                  const std::vector<SynthSample>& conflict_split) {
  return shape_bias(model_predictor(p), conflict_split);
}

// ---------------------------------------------------------------------------
// shape-factor dimension counting

enum class Factor { kShape, kTexture, kResidual };

inline std::string to_string(Factor f) {
  switch (f) {
    case Factor::kShape: return "shape";
    case Factor::kTexture: return "texture";
    case Factor::kResidual: return "residual";
  }
  return "?";
}

struct ShapeFactorResult {
  std::array<Factor, kConv2Filters> assignment{};
  double shape_fraction = 0;
  double texture_fraction = 0;
  std::vector<std::string> warnings;  // degenerate (zero-variance) dimensions
};

using EmbeddingPairs = std::vector<std::pair<std::vector<float>, std::vector<float>>>;

namespace detail {

// Pearson correlation of dim k across pair members. `degenerate` is set when
// either side has zero variance.
inline double pair_correlation(const EmbeddingPairs& pairs, int k, bool& degenerate) {
  const double n = static_cast<double>(pairs.size());
  double sa = 0, sb = 0;
  for (const auto& [a, b] : pairs) {
    sa += a[k];
    sb += b[k];
  }
  const double ma = sa / n, mb = sb / n;
  double vaa = 0, vbb = 0, vab = 0;
  for (const auto& [a, b] : pairs) {
    double da = a[k] - ma, db = b[k] - mb;
    vaa += da * da;
    vbb += db * db;
    vab += da * db;
  }
  if (vaa <= 0.0 || vbb <= 0.0) {
    degenerate = true;
    return 0.0;
  }
  degenerate = false;
  return vab / std::sqrt(vaa * vbb);
}

}  // namespace detail

/// Assign each embedding dimension to shape, texture, or residual. A dim is
/// claimed by a factor when its member-pair correlation under that factor's
/// pair set clears the random-pair baseline by at least kFactorMargin;
/// everything else (including ties and zero-variance dims) is residual.
inline constexpr double kFactorMargin = 0.2;

inline ShapeFactorResult shape_factor_from_embeddings(const EmbeddingPairs& same_shape,
                                                      const EmbeddingPairs& same_texture,
                                                      const EmbeddingPairs& random_pairs) {
  if (same_shape.size() < 200 || same_texture.size() < 200 || random_pairs.size() < 200)
    throw ConfigError("shape_factor: each pair set needs at least 200 pairs");
  ShapeFactorResult res;
  int n_shape = 0, n_texture = 0;
  for (int k = 0; k < kConv2Filters; ++k) {
    bool dg_s = false, dg_t = false, dg_r = false;
    double rs = std::max(0.0, detail::pair_correlation(same_shape, k, dg_s));
    double rt = std::max(0.0, detail::pair_correlation(same_texture, k, dg_t));
    double rr = std::max(0.0, detail::pair_correlation(random_pairs, k, dg_r));
    if (dg_s || dg_t || dg_r) {
      res.warnings.push_back("dimension " + std::to_string(k) +
                             " has zero variance in a pair set; assigned residual");
      res.assignment[k] = Factor::kResidual;
      continue;
    }
    double ms = rs - rr, mt = rt - rr;
    if (ms > kFactorMargin && ms > mt) {
      res.assignment[k] = Factor::kShape;
      n_shape++;
    } else if (mt > kFactorMargin && mt > ms) {
      res.assignment[k] = Factor::kTexture;
      n_texture++;
    } else {
      res.assignment[k] = Factor::kResidual;
    }
  }
  res.shape_fraction = static_cast<double>(n_shape) / kConv2Filters;
  res.texture_fraction = static_cast<double>(n_texture) / kConv2Filters;
  return res;
}

/// 16-dim embedding z of one image.
inline std::vector<float> embed(const NetParams<float>& p, const Image& img) {
  ForwardTrace<float> t;
  forward(p, img, t);
  return t.z;
}

inline EmbeddingPairs embed_pairs(const NetParams<float>& p,
                                  const std::vector<std::pair<SynthSample, SynthSample>>& pairs) {
  EmbeddingPairs out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.emplace_back(embed(p, a.image), embed(p, b.image));
  return out;
}

inline ShapeFactorResult shape_factor(
    const NetParams<float>& p,
    const std::vector<std::pair<SynthSample, SynthSample>>& same_shape,
    const std::vector<std::pair<SynthSample, SynthSample>>& same_texture,
    const std::vector<std::pair<SynthSample, SynthSample>>& random_pairs) {
  return shape_factor_from_embeddings(embed_pairs(p, same_shape),
                                      embed_pairs(p, same_texture),
                                      embed_pairs(p, random_pairs));
}

// ---------------------------------------------------------------------------
// binary mask readout on frozen features

/// Per-pixel feature provider: returns H*W*D values for one sample, pixel
/// index major. `dim` is D.
struct FeatureExtractor {
  int dim = 0;
  std::function<std::vector<float>(const SynthSample&)> features;
};

/// Upsampled (nearest-neighbor, 8x8 -> 32x32) frozen feature map F.
inline FeatureExtractor model_feature_extractor(const NetParams<float>& p) {
  FeatureExtractor fe;
  fe.dim = kConv2Filters;
  fe.features = [&p](const SynthSample& s) {
    ForwardTrace<float> t;
    forward(p, s.image, t);
    std::vector<float> feat(static_cast<std::size_t>(kImageSize) * kImageSize *
                            kConv2Filters);
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x) {
        std::size_t base = (static_cast<std::size_t>(y) * kImageSize + x) * kConv2Filters;
        for (int k = 0; k < kConv2Filters; ++k)
          feat[base + k] = t.f[k * 64 + (y / 4) * 8 + (x / 4)];
      }
    return feat;
  };
  return fe;
}

struct ReadoutWeights {
  std::vector<float> w;
  float b = 0;
};

struct ReadoutConfig {
  int epochs = 12;
  double lr = 1.0;
};

/// Per-pixel logistic regression trained by SGD, one update per sample, in
/// split order. Deterministic.
inline ReadoutWeights mask_readout_train(const FeatureExtractor& fe,
                                         const std::vector<SynthSample>& split,
                                         const ReadoutConfig& cfg = {}) {
  if (split.empty()) throw EmptySplit("mask_readout_train: empty split");
  ReadoutWeights rw;
  rw.w.assign(fe.dim, 0.0f);
  const std::size_t pixels = static_cast<std::size_t>(kImageSize) * kImageSize;
  std::vector<double> gw(fe.dim);
  for (int e = 0; e < cfg.epochs; ++e) {
    for (const auto& s : split) {
      std::vector<float> feat = fe.features(s);
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0;
      for (std::size_t i = 0; i < pixels; ++i) {
        const float* f = feat.data() + i * fe.dim;
        double z = rw.b;
        for (int k = 0; k < fe.dim; ++k) z += rw.w[k] * f[k];
        double err = 1.0 / (1.0 + std::exp(-z)) - (s.mask[i] ? 1.0 : 0.0);
        for (int k = 0; k < fe.dim; ++k) gw[k] += err * f[k];
        gb += err;
      }
      for (int k = 0; k < fe.dim; ++k)
        rw.w[k] -= static_cast<float>(cfg.lr * gw[k] / pixels);
      rw.b -= static_cast<float>(cfg.lr * gb / pixels);
    }
  }
  return rw;
}

/// Mean IoU over {foreground, background} at probability threshold 0.5,
/// aggregated over the whole split. A class absent from both prediction and
/// truth scores IoU 1.
inline double mask_readout_eval(const FeatureExtractor& fe, const ReadoutWeights& rw,
                                const std::vector<SynthSample>& split) {
  if (split.empty()) throw EmptySplit("mask_readout_eval: empty split");
  const std::size_t pixels = static_cast<std::size_t>(kImageSize) * kImageSize;
  // [class][tp, fp, fn], class 0 = background, 1 = foreground
  uint64_t tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0};
  for (const auto& s : split) {
    std::vector<float> feat = fe.features(s);
    for (std::size_t i = 0; i < pixels; ++i) {
      const float* f = feat.data() + i * fe.dim;
      double z = rw.b;
      for (int k = 0; k < fe.dim; ++k) z += rw.w[k] * f[k];
      int pred = z > 0.0 ? 1 : 0;
      int truth = s.mask[i] ? 1 : 0;
      if (pred == truth) {
        tp[truth]++;
      } else {
        fp[pred]++;
        fn[truth]++;
      }
    }
  }
  double miou = 0;
  for (int c = 0; c < 2; ++c) {
    uint64_t denom = tp[c] + fp[c] + fn[c];
    miou += denom == 0 ? 1.0 : static_cast<double>(tp[c]) / denom;
  }
  return miou / 2.0;
}

// ---------------------------------------------------------------------------
// distortion robustness

struct RobustnessCurve {
  Distortion kind = Distortion::kGaussianNoise;
  std::vector<double> levels;
  std::vector<double> acc;
};

inline const std::vector<double>& default_severity_levels() {
  static const std::vector<double> levels{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  return levels;
}

inline const std::vector<Distortion>& all_distortions() {
  static const std::vector<Distortion> kinds{
      Distortion::kGaussianNoise, Distortion::kUniformNoise, Distortion::kLowPass,
      Distortion::kHighPass,      Distortion::kContrast,     Distortion::kRotation};
  return kinds;
}

/// Accuracy at every (kind, level) cell. Cells are independent, so they are
/// evaluated in parallel and gathered in deterministic order.
inline std::vector<RobustnessCurve> robustness_sweep(
    const NetParams<float>& p, const std::vector<SynthSample>& split,
    const std::vector<Distortion>& kinds, const std::vector<double>& levels,
    uint64_t seed, int threads = 1) {
  if (split.empty()) throw EmptySplit("robustness_sweep: empty split");
  std::vector<RobustnessCurve> curves(kinds.size());
  for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
    curves[ki].kind = kinds[ki];
    curves[ki].levels = levels;
    curves[ki].acc.assign(levels.size(), 0.0);
  }
  const std::size_t cells = kinds.size() * levels.size();
  parallel_for(cells, threads, [&](std::size_t cell) {
    const std::size_t ki = cell / levels.size(), li = cell % levels.size();
    const std::string stream =
        "distort:" + to_string(kinds[ki]) + ":" + std::to_string(li);
    ForwardTrace<float> trace;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < split.size(); ++i) {
      Image img = distort(split[i].image, kinds[ki], levels[li], {seed, stream, i});
      forward(p, img, trace);
      if (argmax_class(trace.logits) == split[i].shape_class) ++correct;
    }
    curves[ki].acc[li] = static_cast<double>(correct) / split.size();
  });
  return curves;
}

// ---------------------------------------------------------------------------
// metrics report

struct MetricsReport {
  std::string run_id;
  std::string mode;
  uint64_t seed = 0;
  double clean_acc = 0;
  ShapeBiasResult conflict;
  ShapeFactorResult factor;
  double miou = 0;
  std::vector<RobustnessCurve> robustness;
};

inline json report_to_json(const MetricsReport& r) {
  json per_class = json::array();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& pc = r.conflict.per_class[c];
    int covered = pc.shape_correct + pc.texture_correct;
    per_class.push_back(
        {{"shape_class", c},
         {"shape_correct", pc.shape_correct},
         {"texture_correct", pc.texture_correct},
         {"neither", pc.neither},
         {"shape_bias",
          covered > 0 ? static_cast<double>(pc.shape_correct) / covered : 0.0}});
  }
  json assignments = json::array();
  for (Factor f : r.factor.assignment) assignments.push_back(to_string(f));
  json robustness = json::array();
  for (const auto& c : r.robustness)
    robustness.push_back(
        {{"kind", to_string(c.kind)}, {"levels", c.levels}, {"acc", c.acc}});
  return json{{"run_id", r.run_id},
              {"mode", r.mode},
              {"seed", r.seed},
              {"clean_acc", r.clean_acc},
              {"conflict",
               {{"shape_bias", r.conflict.shape_bias},
                {"coverage", r.conflict.coverage},
                {"shape_correct", r.conflict.shape_correct},
                {"texture_correct", r.conflict.texture_correct},
                {"neither", r.conflict.neither},
                {"per_class", per_class}}},
              {"shape_factor",
               {{"shape_fraction", r.factor.shape_fraction},
                {"texture_fraction", r.factor.texture_fraction},
                {"assignments", assignments}}},
              {"miou", r.miou},
              {"robustness", robustness}};
}

/// Fetch a (possibly nested) field, naming the missing path in the error.
inline const json& require_field(const json& j, std::initializer_list<const char*> path) {
  const json* cur = &j;
  std::string where;
  for (const char* key : path) {
    where += where.empty() ? key : std::string(".") + key;
    if (!cur->is_object() || !cur->contains(key))
      throw SchemaMismatch("report missing field: " + where);
    cur = &(*cur)[key];
  }
  return *cur;
}

/// CSV with one (kind, level, acc) row per sweep cell.
inline std::string report_to_csv(const MetricsReport& r) {
  auto fmt = [](double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::string out = "kind,level,acc\n";
  for (const auto& c : r.robustness)
    for (std::size_t i = 0; i < c.levels.size(); ++i)
      out += to_string(c.kind) + "," + fmt(c.levels[i]) + "," + fmt(c.acc[i]) + "\n";
  return out;
}

}  // namespace shapeforge
