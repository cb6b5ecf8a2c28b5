#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "shapeforge/synth.hpp"

using namespace shapeforge;

namespace {

double foreground_fraction(const std::vector<uint8_t>& mask) {
  double fg = 0;
  for (uint8_t m : mask) fg += m;
  return fg / mask.size();
}

// Nearest-template texture matcher: masked squared error against every
// distinct phase of every texture class. The composed foreground copies
// texture pixels verbatim, so the true class reaches exactly zero error.
struct TextureMatcher {
  std::vector<std::pair<int, Image>> templates;

  TextureMatcher() {
    std::set<std::vector<float>> seen;
    for (int cls = 0; cls < kNumClasses; ++cls)
      for (int px = 0; px < kImageSize; ++px)
        for (int py = 0; py < kImageSize; ++py) {
          Image t = render_texture_at(cls, px, py);
          if (seen.insert(t.data).second) templates.emplace_back(cls, std::move(t));
        }
  }

  int classify(const SynthSample& s) const {
    double best = 1e300;
    int best_cls = -1;
    for (const auto& [cls, t] : templates) {
      double err = 0;
      for (std::size_t i = 0; i < s.mask.size() && err < best; ++i) {
        if (!s.mask[i]) continue;
        double d = s.image.data[i] - t.data[i];
        err += d * d;
      }
      if (err < best) {
        best = err;
        best_cls = cls;
      }
    }
    return best_cls;
  }
};

}  // namespace

TEST_CASE("shape rendering", "[synth]") {
  SECTION("unjittered circle equals the disc predicate") {
    auto mask = render_shape_at(0, 0, 0, 1.0, 0.0);
    const double r = 9.9;
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x) {
        double dx = x + 0.5 - 16.0, dy = y + 0.5 - 16.0;
        REQUIRE(static_cast<bool>(mask[y * kImageSize + x]) ==
                (dx * dx + dy * dy <= r * r));
      }
  }
  SECTION("unjittered square is an axis-aligned filled square") {
    auto mask = render_shape_at(1, 0, 0, 1.0, 0.0);
    int minr = kImageSize, maxr = -1, minc = kImageSize, maxc = -1, area = 0;
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x)
        if (mask[y * kImageSize + x]) {
          area++;
          minr = std::min(minr, y);
          maxr = std::max(maxr, y);
          minc = std::min(minc, x);
          maxc = std::max(maxc, x);
        }
    int side = maxr - minr + 1;
    REQUIRE(side == maxc - minc + 1);
    REQUIRE(area == side * side);
    for (int y = minr; y <= maxr; ++y)
      for (int x = minc; x <= maxc; ++x) REQUIRE(mask[y * kImageSize + x] == 1);
  }
  SECTION("foreground fraction stays in [0.15, 0.60] for every class and jitter") {
    for (int cls = 0; cls < kNumClasses; ++cls) {
      double lo = 1.0, hi = 0.0;
      for (uint64_t i = 0; i < 1000; ++i) {
        double f = foreground_fraction(render_shape(cls, {900, "audit", i}));
        lo = std::min(lo, f);
        hi = std::max(hi, f);
      }
      INFO("class " << cls << " fraction range [" << lo << ", " << hi << "]");
      REQUIRE(lo >= 0.15);
      REQUIRE(hi <= 0.60);
    }
  }
}

TEST_CASE("texture rendering", "[synth]") {
  SECTION("vertical stripes: columns alternate in blocks of four") {
    Image t = render_texture_at(0, 0, 0);
    for (int x = 0; x < kImageSize; ++x) {
      float want = ((x / 4) % 2) ? 0.8f : 0.2f;
      for (int y = 0; y < kImageSize; ++y) REQUIRE(t.at(y, x) == want);
    }
  }
  SECTION("coarse checkerboard: 16 alternating 8x8 blocks") {
    Image t = render_texture_at(4, 0, 0);
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x) {
        float want = (((x / 8) + (y / 8)) % 2) ? 0.8f : 0.2f;
        REQUIRE(t.at(y, x) == want);
      }
  }
  SECTION("mean intensity stays in [0.3, 0.7] for every class and phase") {
    for (int cls = 0; cls < kNumClasses; ++cls) {
      for (uint64_t i = 0; i < 1000; ++i) {
        Image t = render_texture(cls, {901, "audit", i});
        double mean = 0;
        for (float v : t.data) mean += v;
        mean /= t.data.size();
        INFO("class " << cls << " phase " << i);
        REQUIRE(mean >= 0.3);
        REQUIRE(mean <= 0.7);
      }
    }
  }
}

TEST_CASE("sample composition", "[synth]") {
  SECTION("striped disc: foreground carries only texture intensities") {
    SynthSample s = compose_sample(0, 0, {902, "compose", 0});
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (s.mask[i])
        REQUIRE((s.image.data[i] == 0.2f || s.image.data[i] == 0.8f));
      else
        REQUIRE(std::fabs(s.image.data[i] - 0.5f) <= 0.02f);
    }
  }
  SECTION("identical arguments give a bit-identical sample") {
    SynthSample a = compose_sample(3, 7, {903, "compose", 5});
    SynthSample b = compose_sample(3, 7, {903, "compose", 5});
    REQUIRE(a.image == b.image);
    REQUIRE(a.mask == b.mask);
  }
}

TEST_CASE("split generation", "[synth]") {
  SECTION("aligned: texture equals shape, ten samples per class at n=100") {
    auto [man, samples] = generate_split(SplitMode::kAligned, 100, 904);
    for (const auto& s : samples) REQUIRE(s.texture_class == s.shape_class);
    for (uint32_t c : man.shape_class_counts) REQUIRE(c == 10);
  }
  SECTION("conflict: never texture == shape") {
    auto [man, samples] = generate_split(SplitMode::kConflict, 900, 905);
    for (const auto& s : samples) REQUIRE(s.texture_class != s.shape_class);
  }
  SECTION("independent: texture matches shape a tenth of the time") {
    auto [man, samples] = generate_split(SplitMode::kIndependent, 10000, 906, 4);
    double agree = 0;
    for (const auto& s : samples) agree += s.texture_class == s.shape_class;
    REQUIRE(std::fabs(agree / samples.size() - 0.1) < 0.02);
  }
  SECTION("shape classes stay balanced within one sample") {
    auto [man, samples] = generate_split(SplitMode::kIndependent, 97, 907);
    uint32_t lo = man.shape_class_counts[0], hi = lo;
    for (uint32_t c : man.shape_class_counts) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    REQUIRE(hi - lo <= 1);
  }
  SECTION("background never strays more than 0.02 from gray") {
    auto [man, samples] = generate_split(SplitMode::kAligned, 50, 908);
    for (const auto& s : samples)
      for (std::size_t i = 0; i < s.mask.size(); ++i)
        if (!s.mask[i]) REQUIRE(std::fabs(s.image.data[i] - 0.5f) <= 0.02f);
  }
  SECTION("generation is independent of the worker count") {
    auto [m1, a] = generate_split(SplitMode::kConflict, 64, 909, 1);
    auto [m2, b] = generate_split(SplitMode::kConflict, 64, 909, 8);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].image == b[i].image);
      REQUIRE(a[i].mask == b[i].mask);
    }
  }
}

TEST_CASE("factor pairs", "[synth]") {
  SECTION("same_shape pairs share shape and differ in texture") {
    for (const auto& [a, b] : generate_factor_pairs(PairKind::kSameShape, 300, 910)) {
      REQUIRE(a.shape_class == b.shape_class);
      REQUIRE(a.texture_class != b.texture_class);
    }
  }
  SECTION("same_texture pairs share texture and differ in shape") {
    for (const auto& [a, b] : generate_factor_pairs(PairKind::kSameTexture, 300, 911)) {
      REQUIRE(a.texture_class == b.texture_class);
      REQUIRE(a.shape_class != b.shape_class);
    }
  }
  SECTION("random pairs share a shape a tenth of the time") {
    auto pairs = generate_factor_pairs(PairKind::kRandom, 10000, 912, 4);
    double same = 0;
    for (const auto& [a, b] : pairs) same += a.shape_class == b.shape_class;
    REQUIRE(std::fabs(same / pairs.size() - 0.1) < 0.02);
  }
}

TEST_CASE("texture shortcut is learnable by a template matcher", "[synth]") {
  // Certifies that texture alone predicts the label on aligned data.
  TextureMatcher matcher;
  auto [man, samples] = generate_split(SplitMode::kAligned, 300, 913, 4);
  for (const auto& s : samples) REQUIRE(matcher.classify(s) == s.texture_class);
}

TEST_CASE("distortions", "[synth]") {
  Image img = compose_sample(2, 4, {914, "distort", 0}).image;
  SECTION("level zero is the identity for every kind") {
    for (Distortion kind :
         {Distortion::kGaussianNoise, Distortion::kUniformNoise, Distortion::kLowPass,
          Distortion::kHighPass, Distortion::kContrast, Distortion::kRotation})
      REQUIRE(distort(img, kind, 0.0, {915, "d", 0}) == img);
  }
  SECTION("contrast level one flattens everything to exactly 0.5") {
    Image out = distort(img, Distortion::kContrast, 1.0, {915, "d", 1});
    for (float v : out.data) REQUIRE(v == 0.5f);
  }
  SECTION("gaussian noise magnitude matches a clipped-normal quadrature oracle") {
    Image gray(100, 100, 1, 0.5f);
    for (double level : {0.2, 0.5}) {
      Image out = distort(gray, Distortion::kGaussianNoise, level, {916, "d", 2});
      double var = 0;
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        double d = out.data[i] - 0.5;
        var += d * d;
      }
      var /= out.data.size();
      // E[min(|sigma Z|, 0.5)^2] by Simpson quadrature
      const double sigma = 0.5 * level;
      double expect = 0;
      const int n = 200000;
      const double a = -10, b = 10, h = (b - a) / n;
      for (int i = 0; i <= n; ++i) {
        double z = a + i * h;
        double x = std::min(std::fabs(sigma * z), 0.5);
        double f = x * x * std::exp(-0.5 * z * z) / std::sqrt(2 * 3.14159265358979);
        expect += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
      }
      expect *= h / 3;
      REQUIRE(std::fabs(std::sqrt(var) - std::sqrt(expect)) < 0.01);
    }
  }
  SECTION("uniform noise has the same standard deviation scaling") {
    Image gray(100, 100, 1, 0.5f);
    Image out = distort(gray, Distortion::kUniformNoise, 0.4, {917, "d", 3});
    double var = 0;
    for (float v : out.data) var += (v - 0.5) * (v - 0.5);
    var /= out.data.size();
    REQUIRE(std::fabs(std::sqrt(var) - 0.2) < 0.01);  // 0.5 * level
  }
  SECTION("low-pass blur of an interior spike spreads to a uniform 3x3 block") {
    Image spike(9, 9, 1, 0.0f);
    spike.at(4, 4) = 0.9f;
    Image out = distort(spike, Distortion::kLowPass, 0.25, {918, "d", 4});  // radius 1
    for (int r = 3; r <= 5; ++r)
      for (int c = 3; c <= 5; ++c)
        REQUIRE(std::fabs(out.at(r, c) - 0.1f) < 1e-6f);
    REQUIRE(out.at(0, 0) == 0.0f);
  }
  SECTION("high-pass of a constant is flat gray") {
    Image flat(8, 8, 1, 0.3f);
    Image out = distort(flat, Distortion::kHighPass, 0.5, {919, "d", 5});
    for (float v : out.data) REQUIRE(std::fabs(v - 0.5f) < 1e-6f);
  }
  SECTION("rotation at level one is an exact quarter turn") {
    Image out = distort(img, Distortion::kRotation, 1.0, {920, "d", 6});
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x)
        REQUIRE(std::fabs(out.at(y, x) - img.at(31 - x, y)) < 1e-5f);
  }
  SECTION("invalid level is rejected") {
    REQUIRE_THROWS_AS(distort(img, Distortion::kContrast, -0.1, {921, "d", 7}),
                      InvalidLevel);
    REQUIRE_THROWS_AS(distort(img, Distortion::kContrast, 1.5, {921, "d", 7}),
                      InvalidLevel);
  }
}
