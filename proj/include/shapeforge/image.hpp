#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shapeforge/error.hpp"

namespace shapeforge {

/// Dense H x W x C pixel grid, row-major with interleaved channels,
/// intensities in [0, 1]. The common currency of the whole pipeline.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int r, int c, int ch = 0) {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  float at(int r, int c, int ch = 0) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Image& o) const {
    return same_shape(o) && data == o.data;
  }
};

/// Single-channel edge-intensity image, values in [0, 1].
using EdgeMap = Image;

/// Image and the grid-cell permutation that produced it.
struct ShuffledImage {
  Image image;
  std::vector<uint32_t> permutation;
};

inline bool image_valid(const Image& img) {
  if (img.height <= 0 || img.width <= 0 ||
      (img.channels != 1 && img.channels != 3))
    return false;
  if (img.data.size() != static_cast<std::size_t>(img.height) * img.width * img.channels)
    return false;
  for (float v : img.data)
    if (!(v >= 0.0f && v <= 1.0f)) return false;  // also rejects NaN
  return true;
}

/// Luma grayscale with weights (0.299, 0.587, 0.114). Anchored on the blue
/// channel so constant pixels map to themselves exactly.
inline Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.height, img.width, 1);
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    float r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
    float v = b + 0.587f * (g - b) + 0.299f * (r - b);
    out.data[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

/// |Laplacian| of the grayscale image, replicate-padded, max-normalized to
/// [0, 1]. Kernel is the 4-neighbor [[0,1,0],[1,-4,1],[0,1,0]]. A constant
/// image yields an all-zero map.
inline EdgeMap edge_map(const Image& img) {
  if (img.height < 3 || img.width < 3)
    throw ImageTooSmall("edge_map: image must be at least 3x3, got " +
                        std::to_string(img.height) + "x" + std::to_string(img.width));
  Image g = to_grayscale(img);
  const int h = g.height, w = g.width;
  EdgeMap out(h, w, 1);
  auto pix = [&](int r, int c) {
    r = std::clamp(r, 0, h - 1);
    c = std::clamp(c, 0, w - 1);
    return g.data[static_cast<std::size_t>(r) * w + c];
  };
  float peak = 0.0f;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      // (up+down) + (left+right) keeps the response bit-exact under mirroring
      float lap = (pix(r - 1, c) + pix(r + 1, c)) +
                  (pix(r, c - 1) + pix(r, c + 1)) - 4.0f * pix(r, c);
      float a = std::fabs(lap);
      out.data[static_cast<std::size_t>(r) * w + c] = a;
      peak = std::max(peak, a);
    }
  }
  if (peak > 0.0f)
    for (float& v : out.data) v /= peak;
  return out;
}

inline bool is_permutation(const std::vector<uint32_t>& perm, std::size_t n) {
  if (perm.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (uint32_t p : perm) {
    if (p >= n || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

inline std::vector<uint32_t> invert_permutation(const std::vector<uint32_t>& perm) {
  std::vector<uint32_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<uint32_t>(i);
  return inv;
}

/// Partition the image into a g x g grid of equal patches and place source
/// patch perm[j] into destination cell j.
inline ShuffledImage patch_shuffle(const Image& img, int grid,
                                   const std::vector<uint32_t>& perm) {
  if (grid < 1 || img.height % grid != 0 || img.width % grid != 0)
    throw IndivisibleDimensions("patch_shuffle: " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) +
                                " not divisible by grid " + std::to_string(grid));
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;
  if (!is_permutation(perm, cells))
    throw InvalidPermutation("patch_shuffle: perm is not a bijection on {0..." +
                             std::to_string(cells - 1) + "}");
  const int ph = img.height / grid, pw = img.width / grid, ch = img.channels;
  ShuffledImage out{Image(img.height, img.width, ch), perm};
  for (int cell = 0; cell < static_cast<int>(cells); ++cell) {
    int dr = (cell / grid) * ph, dc = (cell % grid) * pw;
    int sr = (static_cast<int>(perm[cell]) / grid) * ph;
    int sc = (static_cast<int>(perm[cell]) % grid) * pw;
    for (int r = 0; r < ph; ++r) {
      const float* src = &img.data[(static_cast<std::size_t>(sr + r) * img.width + sc) * ch];
      float* dst = &out.image.data[(static_cast<std::size_t>(dr + r) * img.width + dc) * ch];
      std::copy(src, src + static_cast<std::size_t>(pw) * ch, dst);
    }
  }
  return out;
}

/// Convex blend lambda*t + (1-lambda)*s. The boundaries lambda=0 and
/// lambda=1 return s and t bit-exactly; every element stays inside
/// [min(t,s), max(t,s)].
inline Image superpose(const Image& t, const Image& s, double lambda) {
  if (!t.same_shape(s))
    throw ShapeMismatch("superpose: operand shapes differ");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw InvalidLambda("superpose: lambda " + std::to_string(lambda) +
                        " outside [0,1]");
  const float lf = static_cast<float>(lambda);
  const float cf = 1.0f - lf;
  Image out(t.height, t.width, t.channels);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    float a = t.data[i], b = s.data[i];
    float lo = std::min(a, b), hi = std::max(a, b);
    out.data[i] = std::clamp(lf * a + cf * b, lo, hi);
  }
  return out;
}

}  // namespace shapeforge
