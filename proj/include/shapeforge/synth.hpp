#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "shapeforge/image.hpp"
#include "shapeforge/parallel.hpp"
#include "shapeforge/rng.hpp"

namespace shapeforge {

inline constexpr int kImageSize = 32;
inline constexpr int kNumClasses = 10;

/// One synthetic record: a textured shape on a near-gray background, both
/// factor labels, and the exact foreground mask.
struct SynthSample {
  Image image;                 // 32x32x1
  int shape_class = 0;         // [0, 10)
  int texture_class = 0;       // [0, 10)
  std::vector<uint8_t> mask;   // 32*32 of 0/1, 1 = foreground shape
};

enum class SplitMode { kAligned, kConflict, kIndependent };
enum class PairKind { kSameShape, kSameTexture, kRandom };

inline std::string to_string(SplitMode m) {
  switch (m) {
    case SplitMode::kAligned: return "aligned";
    case SplitMode::kConflict: return "conflict";
    case SplitMode::kIndependent: return "independent";
  }
  return "?";
}

inline std::string to_string(PairKind k) {
  switch (k) {
    case PairKind::kSameShape: return "same_shape";
    case PairKind::kSameTexture: return "same_texture";
    case PairKind::kRandom: return "random";
  }
  return "?";
}

struct DatasetManifest {
  std::string split_name;
  std::string mode;  // aligned | conflict | independent | same_shape | ...
  uint32_t count = 0;
  std::array<uint32_t, kNumClasses> shape_class_counts{};
  std::array<uint32_t, kNumClasses> texture_class_counts{};
  uint64_t seed = 0;
  uint32_t format_version = 1;
  std::string sha256;  // of the companion binary file, filled on write
};

namespace detail {

// Membership test in the shape's canonical frame (|u|,|v| of order 1). The
// proportions are styled so classes separate in pooled low-level statistics:
// edge orientation (isotropic / axial / diagonal), edge density (solid blobs
// vs thin bars vs the double-contour ring) and total area.
inline bool shape_inside(int cls, double u, double v) {
  double au = std::fabs(u), av = std::fabs(v);
  switch (cls) {
    case 0:  // circle: isotropic contour, largest blob
      return u * u + v * v <= 1.0;
    case 1:  // square: axial contour, large blob
      return au <= 1.0 && av <= 1.0;
    case 2:  // triangle, apex up: one axial side, two steep diagonals
      return v <= 0.75 && v >= -1.0 && au <= (v + 1.0) / 1.75;
    case 3:  // diamond: four shallow diagonals
      return au + av <= 1.0;
    case 4:  // plus: thin axial bars
      return (au <= 0.24 || av <= 0.24) && au <= 1.0 && av <= 1.0;
    case 5: {  // ring: thin annulus, double isotropic contour
      double r2 = u * u + v * v;
      return r2 >= 0.75 * 0.75 && r2 <= 1.0;
    }
    case 6:  // H-bar: two thin uprights and a thin waist
      return (au >= 0.55 && au <= 0.85 && av <= 1.0) || (au < 0.55 && av <= 0.15);
    case 7:  // L: two thick strokes
      return (u >= -0.95 && u <= -0.30 && av <= 0.95) ||
             (v >= 0.30 && v <= 0.95 && au <= 0.95);
    case 8:  // T: medium strokes
      return (v >= -0.95 && v <= -0.45 && au <= 0.95) ||
             (au <= 0.25 && v > -0.45 && v <= 0.95);
    case 9:  // X: thin diagonal bars
      return (std::fabs(u - v) <= 0.30 || std::fabs(u + v) <= 0.30) &&
             au <= 1.0 && av <= 1.0;
  }
  return false;
}

// Base half-extent in pixels, per class. Base areas descend from ~44% to
// ~23% of the canvas across the class list, giving each shape a coarse
// global size signature on top of its geometry, while the rendered
// foreground fraction stays inside [0.15, 0.60] over the whole jitter range.
inline constexpr std::array<double, kNumClasses> kShapeHalfExtent = {
    11.98,  // circle    (~0.440)
    10.24,  // square    (~0.410)
    15.30,  // triangle  (~0.380)
    13.39,  // diamond   (~0.350)
    13.70,  // plus      (~0.310)
    14.40,  // ring      (~0.280)
    13.20,  // H-bar     (~0.260)
    10.95,  // L         (~0.240)
    11.70,  // T         (~0.220)
    10.40   // X         (~0.215)
};

// Foreground intensity levels (lo, hi) per texture class. Three properties
// are balanced here: class means spread widely so the texture factor is a
// deliberately easy shortcut, internal contrast stays low so texture edges
// leak only weakly into the edge maps, and every level keeps a clear step
// against the 0.5 background so silhouettes dominate the edge maps. Class 0
// is pinned to the 0.2/0.8 stripe contract.
inline constexpr std::array<std::pair<float, float>, kNumClasses> kTextureLevels = {{
    {0.20f, 0.80f},  // vertical stripes f4
    {0.26f, 0.36f},  // horizontal stripes f4
    {0.29f, 0.40f},  // diagonal stripes f3
    {0.32f, 0.43f},  // fine vertical stripes f2
    {0.35f, 0.44f},  // checkerboard 8
    {0.56f, 0.65f},  // checkerboard 4
    {0.59f, 0.68f},  // checkerboard 2
    {0.62f, 0.71f},  // value noise, coarse
    {0.64f, 0.72f},  // value noise, fine
    {0.56f, 0.68f},  // dot lattice
}};

inline float stripe_block(int cls, int t, int f) {
  int period = 2 * f;
  int tt = ((t % period) + period) % period;
  return tt / f ? kTextureLevels[cls].second : kTextureLevels[cls].first;
}

// Fixed per-class lattice used by the binarized value-noise textures. The
// pattern is part of the texture definition; phase only translates it.
// Built once up front so concurrent texture rendering never races.
inline const std::vector<double>& noise_lattice(int cls, int points) {
  static const auto cache = [] {
    std::array<std::vector<double>, kNumClasses> all;
    for (int c = 0; c < kNumClasses; ++c) {
      int pts = kImageSize / (c == 7 ? 8 : 4);
      CounterRng rng({0x5F0A11u, "texture-noise-pattern", static_cast<uint64_t>(c)});
      all[c].resize(static_cast<std::size_t>(pts) * pts);
      for (double& v : all[c]) v = rng.next_double();
    }
    return all;
  }();
  (void)points;
  return cache[cls];
}

inline double value_noise(int cls, int spacing, double x, double y) {
  const int points = kImageSize / spacing;
  const auto& lat = noise_lattice(cls, points);
  double fx = x / spacing, fy = y / spacing;
  int ix = static_cast<int>(std::floor(fx)), iy = static_cast<int>(std::floor(fy));
  double tx = fx - ix, ty = fy - iy;
  auto at = [&](int i, int j) {
    i = ((i % points) + points) % points;
    j = ((j % points) + points) % points;
    return lat[static_cast<std::size_t>(j) * points + i];
  };
  double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

}  // namespace detail

/// Rasterize shape `cls` with explicit placement: center offset (dx, dy)
/// in pixels, scale multiplier, rotation in radians.
inline std::vector<uint8_t> render_shape_at(int cls, double dx, double dy,
                                            double scale, double rot) {
  const double h = detail::kShapeHalfExtent[cls] * scale;
  const double cx = kImageSize / 2.0 + dx, cy = kImageSize / 2.0 + dy;
  const double cr = std::cos(rot), sr = std::sin(rot);
  std::vector<uint8_t> mask(kImageSize * kImageSize, 0);
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      double px = (c + 0.5 - cx) / h, py = (r + 0.5 - cy) / h;
      double u = cr * px + sr * py, v = -sr * px + cr * py;
      if (detail::shape_inside(cls, u, v)) mask[r * kImageSize + c] = 1;
    }
  }
  return mask;
}

/// Solid shape mask with seeded jitter: position +-3 px, scale +-15%,
/// rotation +-15 degrees. Foreground lands in [0.15, 0.60] of the pixels.
inline std::vector<uint8_t> render_shape(int cls, const SeedSpec& seed) {
  CounterRng rng(seed);
  double dx = rng.next_uniform(-3.0, 3.0);
  double dy = rng.next_uniform(-3.0, 3.0);
  double scale = rng.next_uniform(0.85, 1.15);
  double rot = rng.next_uniform(-15.0, 15.0) * (3.14159265358979323846 / 180.0);
  return render_shape_at(cls, dx, dy, scale, rot);
}

/// Render texture `cls` translated by integer phase (px, py).
inline Image render_texture_at(int cls, int px, int py) {
  Image img(kImageSize, kImageSize, 1);
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const auto [lo, hi] = detail::kTextureLevels[cls];
      float v = 0.5f;
      switch (cls) {
        case 0: v = detail::stripe_block(cls, x + px, 4); break;         // vertical stripes
        case 1: v = detail::stripe_block(cls, y + py, 4); break;         // horizontal stripes
        case 2: v = detail::stripe_block(cls, x + y + px, 3); break;     // diagonal stripes
        case 3: v = detail::stripe_block(cls, x + px, 2); break;         // fine vertical stripes
        case 4:                                                          // checkerboards
        case 5:
        case 6: {
          int s = cls == 4 ? 8 : cls == 5 ? 4 : 2;
          v = (((x + px) / s + (y + py) / s) % 2) ? hi : lo;
          break;
        }
        case 7:                                                          // value noise, coarse
        case 8: {                                                        // value noise, fine
          int s = cls == 7 ? 8 : 4;
          double n = detail::value_noise(cls, s, (x + px) % kImageSize,
                                         (y + py) % kImageSize);
          v = n >= 0.5 ? hi : lo;
          break;
        }
        case 9: {                                                        // dot lattice
          double ddx = ((x + px) % 4) - 1.5, ddy = ((y + py) % 4) - 1.5;
          v = (ddx * ddx + ddy * ddy <= 1.96) ? hi : lo;
          break;
        }
      }
      img.at(y, x) = v;
    }
  }
  return img;
}

/// Texture with a seeded phase offset. Mean intensity stays in [0.3, 0.7].
inline Image render_texture(int cls, const SeedSpec& seed) {
  CounterRng rng(seed);
  int px = static_cast<int>(rng.next_below(kImageSize));
  int py = static_cast<int>(rng.next_below(kImageSize));
  return render_texture_at(cls, px, py);
}

/// Texture inside the shape mask, near-gray (0.5 +- 0.02) background.
inline SynthSample compose_sample(int shape_class, int texture_class,
                                  const SeedSpec& seed) {
  SynthSample s;
  s.shape_class = shape_class;
  s.texture_class = texture_class;
  s.mask = render_shape(shape_class,
                        {seed.root_seed, seed.stream_label + "/shape", seed.index});
  Image tex = render_texture(texture_class, {seed.root_seed,
                                             seed.stream_label + "/texture", seed.index});
  CounterRng bg({seed.root_seed, seed.stream_label + "/bg", seed.index});
  s.image = Image(kImageSize, kImageSize, 1);
  for (int i = 0; i < kImageSize * kImageSize; ++i) {
    s.image.data[i] = s.mask[i] ? tex.data[i]
                                : 0.5f + static_cast<float>(bg.next_double() * 0.04 - 0.02);
  }
  return s;
}

/// Class-balanced split (shape_class = i mod 10). Texture label follows the
/// mode: equal to shape (aligned), uniform off-diagonal (conflict), or
/// uniform over all classes (independent).
inline std::pair<DatasetManifest, std::vector<SynthSample>> generate_split(
    SplitMode mode, std::size_t n, uint64_t seed, int threads = 1) {
  if (n < 1) throw ConfigError("generate_split: n must be >= 1");
  std::vector<SynthSample> samples(n);
  const std::string label = "split/" + to_string(mode);
  parallel_for(n, threads, [&](std::size_t i) {
    int shape = static_cast<int>(i % kNumClasses);
    int texture = shape;
    if (mode != SplitMode::kAligned) {
      CounterRng rng({seed, label + "/texture", i});
      texture = mode == SplitMode::kConflict
                    ? static_cast<int>((shape + 1 + rng.next_below(kNumClasses - 1)) % kNumClasses)
                    : static_cast<int>(rng.next_below(kNumClasses));
    }
    samples[i] = compose_sample(shape, texture, {seed, label + "/sample", i});
  });
  DatasetManifest man;
  man.mode = to_string(mode);
  man.split_name = man.mode;
  man.count = static_cast<uint32_t>(n);
  man.seed = seed;
  for (const auto& s : samples) {
    man.shape_class_counts[s.shape_class]++;
    man.texture_class_counts[s.texture_class]++;
  }
  return {man, std::move(samples)};
}

/// Pairs for the factor-correlation probe: members share the named factor
/// and differ in the other, or are fully independent for kRandom.
inline std::vector<std::pair<SynthSample, SynthSample>> generate_factor_pairs(
    PairKind kind, std::size_t m, uint64_t seed, int threads = 1) {
  if (m < 1) throw ConfigError("generate_factor_pairs: m must be >= 1");
  std::vector<std::pair<SynthSample, SynthSample>> pairs(m);
  const std::string label = "pairs/" + to_string(kind);
  parallel_for(m, threads, [&](std::size_t i) {
    CounterRng rng({seed, label + "/classes", i});
    int s1, t1, s2, t2;
    switch (kind) {
      case PairKind::kSameShape:
        s1 = s2 = static_cast<int>(rng.next_below(kNumClasses));
        t1 = static_cast<int>(rng.next_below(kNumClasses));
        t2 = static_cast<int>((t1 + 1 + rng.next_below(kNumClasses - 1)) % kNumClasses);
        break;
      case PairKind::kSameTexture:
        t1 = t2 = static_cast<int>(rng.next_below(kNumClasses));
        s1 = static_cast<int>(rng.next_below(kNumClasses));
        s2 = static_cast<int>((s1 + 1 + rng.next_below(kNumClasses - 1)) % kNumClasses);
        break;
      default:
        s1 = static_cast<int>(rng.next_below(kNumClasses));
        t1 = static_cast<int>(rng.next_below(kNumClasses));
        s2 = static_cast<int>(rng.next_below(kNumClasses));
        t2 = static_cast<int>(rng.next_below(kNumClasses));
        break;
    }
    pairs[i] = {compose_sample(s1, t1, {seed, label + "/a", i}),
                compose_sample(s2, t2, {seed, label + "/b", i})};
  });
  return pairs;
}

enum class Distortion {
  kGaussianNoise,
  kUniformNoise,
  kLowPass,
  kHighPass,
  kContrast,
  kRotation
};

inline std::string to_string(Distortion d) {
  switch (d) {
    case Distortion::kGaussianNoise: return "gaussian_noise";
    case Distortion::kUniformNoise: return "uniform_noise";
    case Distortion::kLowPass: return "low_pass";
    case Distortion::kHighPass: return "high_pass";
    case Distortion::kContrast: return "contrast";
    case Distortion::kRotation: return "rotation";
  }
  return "?";
}

namespace detail {

inline Image box_blur(const Image& img, int radius) {
  if (radius <= 0) return img;
  const int h = img.height, w = img.width, ch = img.channels;
  const int win = 2 * radius + 1;
  Image horiz(h, w, ch), out(h, w, ch);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k) {
        double sum = 0;
        for (int d = -radius; d <= radius; ++d)
          sum += img.at(r, std::clamp(c + d, 0, w - 1), k);
        horiz.at(r, c, k) = static_cast<float>(sum);
      }
  const double norm = static_cast<double>(win) * win;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k) {
        double sum = 0;
        for (int d = -radius; d <= radius; ++d)
          sum += horiz.at(std::clamp(r + d, 0, h - 1), c, k);
        out.at(r, c, k) = static_cast<float>(sum / norm);
      }
  return out;
}

inline Image rotate_gray_fill(const Image& img, double radians) {
  const int h = img.height, w = img.width, ch = img.channels;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double cr = std::cos(radians), sr = std::sin(radians);
  Image out(h, w, ch);
  auto sample = [&](double x, double y, int k) -> double {
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    double tx = x - x0, ty = y - y0;
    auto at = [&](int xi, int yi) -> double {
      if (xi < 0 || xi >= w || yi < 0 || yi >= h) return 0.5;
      return img.at(yi, xi, k);
    };
    return (at(x0, y0) * (1 - tx) + at(x0 + 1, y0) * tx) * (1 - ty) +
           (at(x0, y0 + 1) * (1 - tx) + at(x0 + 1, y0 + 1) * tx) * ty;
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double sx = cr * (c - cx) + sr * (r - cy) + cx;
      double sy = -sr * (c - cx) + cr * (r - cy) + cy;
      for (int k = 0; k < ch; ++k)
        out.at(r, c, k) = static_cast<float>(std::clamp(sample(sx, sy, k), 0.0, 1.0));
    }
  return out;
}

}  // namespace detail

/// Parametric corruption at severity `level` in [0, 1]. Level 0 returns the
/// input bit-exactly; severity grows monotonically with level.
inline Image distort(const Image& img, Distortion kind, double level,
                     const SeedSpec& seed) {
  if (!(level >= 0.0 && level <= 1.0))
    throw InvalidLevel("distort: level " + std::to_string(level) + " outside [0,1]");
  if (level == 0.0) return img;
  switch (kind) {
    case Distortion::kGaussianNoise: {
      CounterRng rng(seed);
      Image out = img;
      const double s = 0.5 * level;
      for (float& v : out.data)
        v = std::clamp(v + static_cast<float>(s * rng.next_normal()), 0.0f, 1.0f);
      return out;
    }
    case Distortion::kUniformNoise: {
      CounterRng rng(seed);
      Image out = img;
      const double s = 0.5 * level * std::sqrt(3.0);  // same std as the gaussian kind
      for (float& v : out.data)
        v = std::clamp(v + static_cast<float>(s * (2.0 * rng.next_double() - 1.0)),
                       0.0f, 1.0f);
      return out;
    }
    case Distortion::kLowPass:
      return detail::box_blur(img, static_cast<int>(std::lround(4.0 * level)));
    case Distortion::kHighPass: {
      Image blur = detail::box_blur(img, static_cast<int>(std::lround(4.0 * level)));
      Image out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = std::clamp((img.data[i] - blur.data[i]) + 0.5f, 0.0f, 1.0f);
      return out;
    }
    case Distortion::kContrast: {
      const float a = static_cast<float>(1.0 - level);
      const float b = static_cast<float>(level * 0.5);
      Image out(img.height, img.width, img.channels);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = std::clamp(a * img.data[i] + b, 0.0f, 1.0f);
      return out;
    }
    case Distortion::kRotation:
      return detail::rotate_gray_fill(img, level * (3.14159265358979323846 / 2.0));
  }
  throw ConfigError("distort: unknown kind");
}

}  // namespace shapeforge
