#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "shapeforge/eval.hpp"

using namespace shapeforge;

namespace {

// Predictor answering from a scripted list, in split order.
PredictFn scripted(std::vector<int> answers) {
  auto state = std::make_shared<std::pair<std::vector<int>, std::size_t>>(
      std::move(answers), 0);
  return [state](const Image&) { return state->first[state->second++ % state->first.size()]; };
}

EmbeddingPairs planted_pairs(PairKind kind, std::size_t m, uint64_t seed) {
  // dims 0-4 copy the shape id, 5-9 the texture id, 10-15 are pure noise
  EmbeddingPairs out;
  CounterRng rng({seed, "planted/" + to_string(kind), 0});
  for (std::size_t i = 0; i < m; ++i) {
    int s1 = static_cast<int>(rng.next_below(10));
    int t1 = static_cast<int>(rng.next_below(10));
    int s2 = kind == PairKind::kSameShape
                 ? s1
                 : static_cast<int>(rng.next_below(10));
    int t2 = kind == PairKind::kSameTexture
                 ? t1
                 : static_cast<int>(rng.next_below(10));
    if (kind == PairKind::kSameShape) t2 = (t1 + 1 + rng.next_below(9)) % 10;
    if (kind == PairKind::kSameTexture) s2 = (s1 + 1 + rng.next_below(9)) % 10;
    auto emb = [&](int s, int t) {
      std::vector<float> z(16);
      for (int k = 0; k < 5; ++k) z[k] = static_cast<float>(s);
      for (int k = 5; k < 10; ++k) z[k] = static_cast<float>(t);
      for (int k = 10; k < 16; ++k) z[k] = static_cast<float>(rng.next_normal());
      return z;
    };
    out.emplace_back(emb(s1, t1), emb(s2, t2));
  }
  return out;
}

}  // namespace

TEST_CASE("accuracy", "[eval]") {
  auto split = generate_split(SplitMode::kAligned, 100, 4000).second;
  SECTION("zero-weight model predicts class 0 and scores 0.10 on a balanced split") {
    NetParams<float> zero;
    REQUIRE(accuracy(zero, split) == 0.10);
  }
  SECTION("an oracle scores 1.0") {
    std::vector<int> answers;
    for (const auto& s : split) answers.push_back(s.shape_class);
    REQUIRE(accuracy(scripted(answers), split) == 1.0);
  }
  SECTION("hand-built four-sample split with three hits scores 0.75") {
    std::vector<SynthSample> four(split.begin(), split.begin() + 4);
    std::vector<int> answers = {four[0].shape_class, four[1].shape_class,
                                (four[2].shape_class + 1) % 10, four[3].shape_class};
    REQUIRE(accuracy(scripted(answers), four) == 0.75);
  }
  SECTION("empty split is rejected") {
    std::vector<SynthSample> empty;
    REQUIRE_THROWS_AS(accuracy(NetParams<float>{}, empty), EmptySplit);
  }
}

TEST_CASE("shape bias counting", "[eval]") {
  auto split = generate_split(SplitMode::kConflict, 10, 4001).second;
  SECTION("6 shape hits, 2 texture hits, 2 neither") {
    std::vector<int> answers;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (i < 6)
        answers.push_back(split[i].shape_class);
      else if (i < 8)
        answers.push_back(split[i].texture_class);
      else {
        int other = 0;
        while (other == split[i].shape_class || other == split[i].texture_class) ++other;
        answers.push_back(other);
      }
    }
    ShapeBiasResult r = shape_bias(scripted(answers), split);
    REQUIRE(r.shape_correct == 6);
    REQUIRE(r.texture_correct == 2);
    REQUIRE(r.neither == 2);
    REQUIRE(r.shape_bias == 0.75);
    REQUIRE(r.coverage == 0.8);
  }
  SECTION("shape oracle scores bias 1, texture oracle scores bias 0") {
    std::vector<int> shape_answers, texture_answers;
    for (const auto& s : split) {
      shape_answers.push_back(s.shape_class);
      texture_answers.push_back(s.texture_class);
    }
    ShapeBiasResult rs = shape_bias(scripted(shape_answers), split);
    REQUIRE(rs.shape_bias == 1.0);
    REQUIRE(rs.coverage == 1.0);
    ShapeBiasResult rt = shape_bias(scripted(texture_answers), split);
    REQUIRE(rt.shape_bias == 0.0);
    REQUIRE(rt.coverage == 1.0);
  }
  SECTION("aligned records are rejected") {
    auto aligned = generate_split(SplitMode::kAligned, 10, 4002).second;
    REQUIRE_THROWS_AS(shape_bias(scripted({0}), aligned), NotConflictSplit);
  }
  SECTION("consistent texture relabeling leaves the metric unchanged") {
    // restrict textures to {5..9} and shapes to {0,1} so a rotation of the
    // texture ids preserves the conflict structure
    std::vector<SynthSample> s1;
    for (int i = 0; i < 20; ++i) {
      SynthSample s = compose_sample(i % 2, 5 + i % 5, {4003, "relabel", (uint64_t)i});
      s1.push_back(std::move(s));
    }
    auto relabel = [](int c) { return c >= 5 ? 5 + (c - 5 + 1) % 5 : c; };
    std::vector<SynthSample> s2 = s1;
    for (auto& s : s2) s.texture_class = relabel(s.texture_class);
    std::vector<int> answers;
    for (std::size_t i = 0; i < s1.size(); ++i)
      answers.push_back(i % 3 == 0 ? s1[i].shape_class
                                   : i % 3 == 1 ? s1[i].texture_class : 4);
    std::vector<int> mapped;
    for (int a : answers) mapped.push_back(relabel(a));
    ShapeBiasResult r1 = shape_bias(scripted(answers), s1);
    ShapeBiasResult r2 = shape_bias(scripted(mapped), s2);
    REQUIRE(r1.shape_correct == r2.shape_correct);
    REQUIRE(r1.texture_correct == r2.texture_correct);
    REQUIRE(r1.neither == r2.neither);
    REQUIRE(r1.shape_bias == r2.shape_bias);
  }
}

TEST_CASE("shape factor estimator", "[eval]") {
  SECTION("recovers the planted factor structure") {
    auto same_shape = planted_pairs(PairKind::kSameShape, 500, 4100);
    auto same_texture = planted_pairs(PairKind::kSameTexture, 500, 4101);
    auto random_pairs = planted_pairs(PairKind::kRandom, 500, 4102);
    ShapeFactorResult r =
        shape_factor_from_embeddings(same_shape, same_texture, random_pairs);
    REQUIRE(std::fabs(r.shape_fraction - 5.0 / 16.0) <= 1.0 / 16.0 + 1e-12);
    REQUIRE(std::fabs(r.texture_fraction - 5.0 / 16.0) <= 1.0 / 16.0 + 1e-12);
    for (int k = 0; k < 5; ++k) REQUIRE(r.assignment[k] == Factor::kShape);
    for (int k = 5; k < 10; ++k) REQUIRE(r.assignment[k] == Factor::kTexture);
  }
  SECTION("all-constant embeddings collapse to residual with warnings") {
    EmbeddingPairs flat(300, {std::vector<float>(16, 0.5f), std::vector<float>(16, 0.5f)});
    ShapeFactorResult r = shape_factor_from_embeddings(flat, flat, flat);
    REQUIRE(r.shape_fraction == 0.0);
    REQUIRE(r.texture_fraction == 0.0);
    for (Factor f : r.assignment) REQUIRE(f == Factor::kResidual);
    REQUIRE_FALSE(r.warnings.empty());
  }
  SECTION("invariant under per-dimension increasing affine transforms") {
    auto same_shape = planted_pairs(PairKind::kSameShape, 400, 4103);
    auto same_texture = planted_pairs(PairKind::kSameTexture, 400, 4104);
    auto random_pairs = planted_pairs(PairKind::kRandom, 400, 4105);
    ShapeFactorResult base =
        shape_factor_from_embeddings(same_shape, same_texture, random_pairs);
    auto transform = [](EmbeddingPairs pairs) {
      for (auto& [a, b] : pairs)
        for (int k = 0; k < 16; ++k) {
          float scale = 0.5f + 0.25f * k, shift = k - 7.0f;
          a[k] = scale * a[k] + shift;
          b[k] = scale * b[k] + shift;
        }
      return pairs;
    };
    ShapeFactorResult moved = shape_factor_from_embeddings(
        transform(same_shape), transform(same_texture), transform(random_pairs));
    REQUIRE(moved.assignment == base.assignment);
  }
}

TEST_CASE("mask readout", "[eval]") {
  auto split = generate_split(SplitMode::kAligned, 30, 4200).second;
  auto bg_baseline = [&](const std::vector<SynthSample>& s) {
    // all-background prediction: IoU_bg = bg fraction, IoU_fg = 0
    double bg = 0, total = 0;
    for (const auto& x : s)
      for (uint8_t m : x.mask) {
        bg += m == 0;
        total += 1;
      }
    return (bg / total) / 2.0;
  };
  SECTION("ground-truth mask as the only feature is nearly perfect") {
    FeatureExtractor fe;
    fe.dim = 1;
    fe.features = [](const SynthSample& s) {
      std::vector<float> f(s.mask.size());
      for (std::size_t i = 0; i < s.mask.size(); ++i) f[i] = s.mask[i];
      return f;
    };
    ReadoutWeights rw = mask_readout_train(fe, split);
    REQUIRE(mask_readout_eval(fe, rw, split) >= 0.99);
  }
  SECTION("constant-zero features predict the majority class everywhere") {
    FeatureExtractor fe;
    fe.dim = 1;
    fe.features = [](const SynthSample& s) {
      return std::vector<float>(s.mask.size(), 0.0f);
    };
    ReadoutWeights rw = mask_readout_train(fe, split);
    REQUIRE(mask_readout_eval(fe, rw, split) ==
            Catch::Approx(bg_baseline(split)).margin(1e-12));
  }
  SECTION("an untrained model lands strictly between the bounds") {
    NetParams<float> p = init_params<float>(4201);
    FeatureExtractor fe = model_feature_extractor(p);
    ReadoutWeights rw = mask_readout_train(fe, split);
    double miou = mask_readout_eval(fe, rw, split);
    REQUIRE(miou > bg_baseline(split));
    REQUIRE(miou < 0.99);
  }
}

TEST_CASE("robustness sweep", "[eval]") {
  auto split = generate_split(SplitMode::kIndependent, 100, 4300).second;
  NetParams<float> p = init_params<float>(4301);
  SECTION("a lone zero level reproduces clean accuracy exactly") {
    auto curves = robustness_sweep(p, split, {Distortion::kGaussianNoise}, {0.0}, 9);
    REQUIRE(curves.size() == 1);
    REQUIRE(curves[0].acc[0] == accuracy(p, split));
  }
  SECTION("full contrast collapse forces a single prediction: 0.1 when balanced") {
    auto curves = robustness_sweep(p, split, {Distortion::kContrast}, {1.0}, 9);
    REQUIRE(curves[0].acc[0] == 0.10);
  }
  SECTION("repeated sweeps are bit-identical") {
    auto a = robustness_sweep(p, split, all_distortions(), {0.0, 0.5, 1.0}, 9, 4);
    auto b = robustness_sweep(p, split, all_distortions(), {0.0, 0.5, 1.0}, 9, 1);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].acc == b[i].acc);
  }
}

TEST_CASE("metrics report serialization", "[eval]") {
  MetricsReport r;
  r.run_id = "abc-baseline";
  r.mode = "baseline";
  r.seed = 7;
  r.clean_acc = 0.5;
  r.conflict.shape_bias = 0.25;
  r.conflict.coverage = 0.8;
  r.factor.shape_fraction = 0.125;
  r.miou = 0.6;
  r.robustness.push_back({Distortion::kLowPass, {0.0, 0.5}, {0.5, 0.4}});
  json j = report_to_json(r);
  REQUIRE(j["conflict"]["shape_bias"] == 0.25);
  REQUIRE(j["shape_factor"]["assignments"].size() == 16);
  REQUIRE(j["robustness"][0]["kind"] == "low_pass");
  std::string csv = report_to_csv(r);
  REQUIRE(csv.find("kind,level,acc\n") == 0);
  REQUIRE(csv.find("low_pass,0.5,0.4") != std::string::npos);
  SECTION("missing fields are named") {
    json broken = j;
    broken["conflict"].erase("shape_bias");
    try {
      require_field(broken, {"conflict", "shape_bias"});
      FAIL("expected SchemaMismatch");
    } catch (const SchemaMismatch& e) {
      REQUIRE(std::string(e.what()).find("conflict.shape_bias") != std::string::npos);
    }
  }
}
