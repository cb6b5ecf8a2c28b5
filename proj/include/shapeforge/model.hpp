#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "shapeforge/augment.hpp"
#include "shapeforge/image.hpp"
#include "shapeforge/rng.hpp"

namespace shapeforge {

// Tiny two-conv classifier:
//   conv 3x3x1->8, ReLU, maxpool 2x2   (32x32 -> 16x16)
//   conv 3x3x8->16, ReLU, maxpool 2x2  (16x16 -> 8x8 feature map F)
//   global average pool -> z[16] -> linear -> logits[10]
inline constexpr int kConv1Filters = 8;
inline constexpr int kConv2Filters = 16;

/// Flat parameter vector with named offsets for the layer views.
template <typename T>
struct NetParams {
  static constexpr int kConv1W = 0;     // 8*1*3*3
  static constexpr int kConv1B = 72;    // 8
  static constexpr int kConv2W = 80;    // 16*8*3*3
  static constexpr int kConv2B = 1232;  // 16
  static constexpr int kFcW = 1248;     // 10*16
  static constexpr int kFcB = 1408;     // 10
  static constexpr int kTotal = 1418;

  std::vector<T> v = std::vector<T>(kTotal, T(0));

  const T* conv1_w() const { return v.data() + kConv1W; }
  const T* conv1_b() const { return v.data() + kConv1B; }
  const T* conv2_w() const { return v.data() + kConv2W; }
  const T* conv2_b() const { return v.data() + kConv2B; }
  const T* fc_w() const { return v.data() + kFcW; }
  const T* fc_b() const { return v.data() + kFcB; }
};

/// Post-activation tensors of every layer, kept for backprop.
template <typename T>
struct ForwardTrace {
  std::vector<T> x0;      // 1x32x32 input copy
  std::vector<T> a1;      // 8x32x32 post-ReLU
  std::vector<T> p1;      // 8x16x16 pooled
  std::vector<T> a2;      // 16x16x16 post-ReLU
  std::vector<T> f;       // 16x8x8 feature map F
  std::vector<T> z;       // 16 global-average embedding
  std::vector<T> logits;  // 10
  std::vector<int32_t> idx1, idx2;  // pool argmax positions
};

namespace detail {

template <typename T>
void conv3x3_forward(const T* in, int C, int H, int W, const T* w, const T* b,
                     int OC, T* out) {
  const int plane = H * W;
  for (int oc = 0; oc < OC; ++oc) {
    T* op = out + oc * plane;
    for (int i = 0; i < plane; ++i) op[i] = b[oc];
    for (int c = 0; c < C; ++c) {
      const T* ip = in + c * plane;
      const T* wp = w + (oc * C + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T wv = wp[ky * 3 + kx];
          const int dy = ky - 1, dx = kx - 1;
          const int y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
          const int x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
          for (int y = y0; y < y1; ++y) {
            const T* irow = ip + (y + dy) * W + dx;
            T* orow = op + y * W;
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward(const T* in, int C, int H, int W, const T* w, int OC,
                      const T* dout, T* din, T* dw, T* db) {
  const int plane = H * W;
  for (int oc = 0; oc < OC; ++oc) {
    const T* dop = dout + oc * plane;
    T s = 0;
    for (int i = 0; i < plane; ++i) s += dop[i];
    db[oc] += s;
    for (int c = 0; c < C; ++c) {
      const T* ip = in + c * plane;
      T* dip = din ? din + c * plane : nullptr;
      const T* wp = w + (oc * C + c) * 9;
      T* dwp = dw + (oc * C + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int dy = ky - 1, dx = kx - 1;
          const int y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
          const int x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
          T acc = 0;
          for (int y = y0; y < y1; ++y) {
            const T* irow = ip + (y + dy) * W + dx;
            const T* drow = dop + y * W;
            for (int x = x0; x < x1; ++x) acc += drow[x] * irow[x];
          }
          dwp[ky * 3 + kx] += acc;
          if (dip) {
            const T wv = wp[ky * 3 + kx];
            for (int y = y0; y < y1; ++y) {
              T* dirow = dip + (y + dy) * W + dx;
              const T* drow = dop + y * W;
              for (int x = x0; x < x1; ++x) dirow[x] += wv * drow[x];
            }
          }
        }
      }
    }
  }
}

// 2x2 stride-2 max pool; ties resolve to the first maximum in scan order.
template <typename T>
void maxpool2_forward(const T* in, int C, int H, int W, T* out, int32_t* idx) {
  const int OH = H / 2, OW = W / 2;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < OH; ++y) {
      for (int x = 0; x < OW; ++x) {
        int base = c * H * W + 2 * y * W + 2 * x;
        int best = base;
        T bv = in[base];
        for (int d = 1; d < 4; ++d) {
          int off = base + (d >> 1) * W + (d & 1);
          if (in[off] > bv) { bv = in[off]; best = off; }
        }
        out[c * OH * OW + y * OW + x] = bv;
        idx[c * OH * OW + y * OW + x] = best;
      }
    }
  }
}

template <typename T>
void relu_inplace(std::vector<T>& v) {
  for (T& x : v)
    if (x < T(0)) x = T(0);
}

}  // namespace detail

/// Run the network, keeping every intermediate needed by backward().
template <typename T>
void forward(const NetParams<T>& p, const Image& img, ForwardTrace<T>& t) {
  if (img.height != kImageSize || img.width != kImageSize || img.channels != 1)
    throw ShapeMismatch("forward: expected 32x32x1 input");
  t.x0.resize(kImageSize * kImageSize);
  for (std::size_t i = 0; i < t.x0.size(); ++i) t.x0[i] = static_cast<T>(img.data[i]);

  t.a1.resize(kConv1Filters * 32 * 32);
  detail::conv3x3_forward(t.x0.data(), 1, 32, 32, p.conv1_w(), p.conv1_b(),
                          kConv1Filters, t.a1.data());
  detail::relu_inplace(t.a1);
  t.p1.resize(kConv1Filters * 16 * 16);
  t.idx1.resize(t.p1.size());
  detail::maxpool2_forward(t.a1.data(), kConv1Filters, 32, 32, t.p1.data(), t.idx1.data());

  t.a2.resize(kConv2Filters * 16 * 16);
  detail::conv3x3_forward(t.p1.data(), kConv1Filters, 16, 16, p.conv2_w(), p.conv2_b(),
                          kConv2Filters, t.a2.data());
  detail::relu_inplace(t.a2);
  t.f.resize(kConv2Filters * 8 * 8);
  t.idx2.resize(t.f.size());
  detail::maxpool2_forward(t.a2.data(), kConv2Filters, 16, 16, t.f.data(), t.idx2.data());

  t.z.assign(kConv2Filters, T(0));
  for (int k = 0; k < kConv2Filters; ++k) {
    T s = 0;
    for (int i = 0; i < 64; ++i) s += t.f[k * 64 + i];
    t.z[k] = s / T(64);
  }

  t.logits.assign(kNumClasses, T(0));
  for (int j = 0; j < kNumClasses; ++j) {
    T s = p.fc_b()[j];
    for (int k = 0; k < kConv2Filters; ++k) s += p.fc_w()[j * kConv2Filters + k] * t.z[k];
    t.logits[j] = s;
  }
}

template <typename T>
ForwardTrace<T> forward(const NetParams<T>& p, const Image& img) {
  ForwardTrace<T> t;
  forward(p, img, t);
  return t;
}

/// -log softmax(logits)[label], max-subtracted for stability.
template <typename T>
T cross_entropy(const std::vector<T>& logits, int label) {
  T m = logits[0];
  for (T v : logits) m = std::max(m, v);
  T sum = 0;
  for (T v : logits) sum += std::exp(v - m);
  return -(logits[label] - m) + std::log(sum);
}

/// dlogits = scale * (softmax(logits) - onehot(label)).
template <typename T>
void softmax_ce_grad(const std::vector<T>& logits, int label, T scale, T* dlogits) {
  T m = logits[0];
  for (T v : logits) m = std::max(m, v);
  T sum = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    dlogits[j] = std::exp(logits[j] - m);
    sum += dlogits[j];
  }
  for (std::size_t j = 0; j < logits.size(); ++j) {
    dlogits[j] /= sum;
    if (static_cast<int>(j) == label) dlogits[j] -= T(1);
    dlogits[j] *= scale;
  }
}

/// Accumulate d(loss)/d(params) into `grad` given d(loss)/d(logits).
template <typename T>
void backward(const NetParams<T>& p, const ForwardTrace<T>& t, const T* dlogits,
              T* grad) {
  using NP = NetParams<T>;
  thread_local std::vector<T> dz, df, da2, dp1, da1;
  dz.assign(kConv2Filters, T(0));
  for (int j = 0; j < kNumClasses; ++j) {
    grad[NP::kFcB + j] += dlogits[j];
    for (int k = 0; k < kConv2Filters; ++k) {
      grad[NP::kFcW + j * kConv2Filters + k] += dlogits[j] * t.z[k];
      dz[k] += dlogits[j] * p.fc_w()[j * kConv2Filters + k];
    }
  }

  df.assign(kConv2Filters * 64, T(0));
  for (int k = 0; k < kConv2Filters; ++k) {
    T g = dz[k] / T(64);
    for (int i = 0; i < 64; ++i) df[k * 64 + i] = g;
  }

  da2.assign(kConv2Filters * 16 * 16, T(0));
  for (std::size_t i = 0; i < t.idx2.size(); ++i) da2[t.idx2[i]] += df[i];
  for (std::size_t i = 0; i < da2.size(); ++i)
    if (t.a2[i] <= T(0)) da2[i] = T(0);

  dp1.assign(kConv1Filters * 16 * 16, T(0));
  detail::conv3x3_backward(t.p1.data(), kConv1Filters, 16, 16, p.conv2_w(),
                           kConv2Filters, da2.data(), dp1.data(),
                           grad + NP::kConv2W, grad + NP::kConv2B);

  da1.assign(kConv1Filters * 32 * 32, T(0));
  for (std::size_t i = 0; i < t.idx1.size(); ++i) da1[t.idx1[i]] += dp1[i];
  for (std::size_t i = 0; i < da1.size(); ++i)
    if (t.a1[i] <= T(0)) da1[i] = T(0);

  detail::conv3x3_backward(t.x0.data(), 1, 32, 32, p.conv1_w(), kConv1Filters,
                           da1.data(), static_cast<T*>(nullptr),
                           grad + NP::kConv1W, grad + NP::kConv1B);
}

/// Lowest-index argmax, so predictions are deterministic under ties.
template <typename T>
int argmax_class(const std::vector<T>& logits) {
  int best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] > logits[best]) best = static_cast<int>(j);
  return best;
}

template <typename T>
struct BatchGrad {
  T loss = 0;
  std::vector<T> grad;
};

/// Mean cross-entropy and its gradient over a list of (image, label).
template <typename T>
BatchGrad<T> batch_ce_grad(const NetParams<T>& p,
                           const std::vector<std::pair<const Image*, int>>& samples) {
  if (samples.empty()) throw EmptyPool("batch_ce_grad: empty sample list");
  BatchGrad<T> out;
  out.grad.assign(NetParams<T>::kTotal, T(0));
  ForwardTrace<T> trace;
  std::array<T, kNumClasses> dl;
  const T invn = T(1) / T(samples.size());
  for (const auto& [img, label] : samples) {
    forward(p, *img, trace);
    out.loss += cross_entropy(trace.logits, label) * invn;
    softmax_ce_grad(trace.logits, label, invn, dl.data());
    backward(p, trace, dl.data(), out.grad.data());
  }
  return out;
}

template <typename T>
struct MixedLoss {
  T loss = 0, nat_loss = 0, aug_loss = 0;
  std::vector<T> grad;
};

/// eta-weighted objective: eta * meanCE(natural) + (1-eta) * meanCE(augmented).
/// The gradient is assembled as the same convex combination of the two
/// half-gradients, so it is linear in eta by construction.
template <typename T>
MixedLoss<T> mixed_loss(const NetParams<T>& p, const MiniBatch& batch, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw ConfigError("mixed_loss: eta outside [0,1]");
  std::vector<std::pair<const Image*, int>> aug;
  aug.reserve(batch.augmented.size());
  for (const AugmentedSample* a : batch.augmented) aug.emplace_back(&a->image, a->label);

  BatchGrad<T> nat = batch_ce_grad(p, batch.natural);
  BatchGrad<T> au = batch_ce_grad(p, aug);
  const T e = static_cast<T>(eta), c = T(1) - static_cast<T>(eta);
  MixedLoss<T> out;
  out.nat_loss = nat.loss;
  out.aug_loss = au.loss;
  out.loss = e * nat.loss + c * au.loss;
  out.grad.resize(NetParams<T>::kTotal);
  for (int i = 0; i < NetParams<T>::kTotal; ++i)
    out.grad[i] = e * nat.grad[i] + c * au.grad[i];
  return out;
}

/// v' = momentum*v + g;  theta' = theta - lr*v'.
template <typename T>
void sgd_step(NetParams<T>& p, const std::vector<T>& grad, std::vector<T>& velocity,
              double lr, double momentum) {
  if (velocity.size() != p.v.size()) velocity.assign(p.v.size(), T(0));
  const T m = static_cast<T>(momentum), l = static_cast<T>(lr);
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    velocity[i] = m * velocity[i] + grad[i];
    p.v[i] -= l * velocity[i];
  }
}

/// He-style init: weight ~ N(0, 2/fan_in), biases zero. Each parameter is
/// keyed on its own index, so init is order-independent.
template <typename T>
NetParams<T> init_params(uint64_t seed) {
  using NP = NetParams<T>;
  NetParams<T> p;
  auto fill = [&](int lo, int hi, double fan_in) {
    const double s = std::sqrt(2.0 / fan_in);
    for (int i = lo; i < hi; ++i) {
      CounterRng rng({seed, "init", static_cast<uint64_t>(i)});
      p.v[i] = static_cast<T>(s * rng.next_normal());
    }
  };
  fill(NP::kConv1W, NP::kConv1B, 9.0);
  fill(NP::kConv2W, NP::kConv2B, 72.0);
  fill(NP::kFcW, NP::kFcB, 16.0);
  return p;
}

}  // namespace shapeforge
