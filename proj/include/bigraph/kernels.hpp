/* Copyright 2026 The bigraph Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "bigraph/error.hpp"
#include "bigraph/tensor.hpp"

/// Reference float32 kernels. Loop orders are fixed (row-major, peer order
/// for aggregation) so reruns are bit-identical. Every kernel writes only its
/// output tensors, whose shapes must already be set by the caller.
namespace bigraph::kernels {

namespace detail {

inline void expect(bool cond, const std::string& what) {
  if (!cond) throw KernelError(what);
}

inline void ensure_finite(const Tensor& t, const char* kernel) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw KernelError(std::string(kernel) + ": non-finite output");
  }
}

inline std::size_t trailing(const Tensor& t) { return t.size() / t.dim(0); }

}  // namespace detail

/// y[N,M] = x[N,D] * w[D,M] + b. `x` may have rank > 2; trailing dims are flattened.
inline void fc_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  using detail::expect;
  expect(x.rank() >= 2 && w.rank() == 2 && b.rank() == 1, "fc_forward: bad ranks");
  const std::size_t n = x.dim(0), d = detail::trailing(x), m = w.dim(1);
  expect(w.dim(0) == d && b.dim(0) == m, "fc_forward: shape mismatch x" + shape_str(x.shape()) +
                                             " w" + shape_str(w.shape()) + " b" + shape_str(b.shape()));
  expect(y.shape() == Shape{n, m}, "fc_forward: output shape " + shape_str(y.shape()));
  auto xs = x.data();
  auto ws = w.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < n; ++i) {
    float* row = &ys[i * m];
    for (std::size_t j = 0; j < m; ++j) row[j] = b[j];
    for (std::size_t k = 0; k < d; ++k) {
      const float xv = xs[i * d + k];
      const float* wrow = &ws[k * m];
      for (std::size_t j = 0; j < m; ++j) row[j] += xv * wrow[j];
    }
  }
  detail::ensure_finite(y, "fc_forward");
}

/// dx = dy * w^T
inline void fc_backward_data(const Tensor& w, const Tensor& dy, Tensor& dx) {
  using detail::expect;
  const std::size_t n = dy.dim(0), m = dy.dim(1), d = w.dim(0);
  expect(w.rank() == 2 && w.dim(1) == m, "fc_backward_data: shape mismatch");
  expect(dx.dim(0) == n && detail::trailing(dx) == d, "fc_backward_data: output shape");
  auto ws = w.data();
  auto dys = dy.data();
  auto dxs = dx.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      float acc = 0.0f;
      for (std::size_t j = 0; j < m; ++j) acc += dys[i * m + j] * ws[k * m + j];
      dxs[i * d + k] = acc;
    }
  }
  detail::ensure_finite(dx, "fc_backward_data");
}

/// dw = x^T * dy
inline void fc_backward_weight(const Tensor& x, const Tensor& dy, Tensor& dw) {
  using detail::expect;
  const std::size_t n = x.dim(0), d = detail::trailing(x), m = dy.dim(1);
  expect(dy.dim(0) == n, "fc_backward_weight: batch mismatch");
  expect(dw.shape() == Shape{d, m}, "fc_backward_weight: output shape");
  auto xs = x.data();
  auto dys = dy.data();
  auto dws = dw.data();
  std::fill(dws.begin(), dws.end(), 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const float xv = xs[i * d + k];
      for (std::size_t j = 0; j < m; ++j) dws[k * m + j] += xv * dys[i * m + j];
    }
  }
  detail::ensure_finite(dw, "fc_backward_weight");
}

/// db = column sums of dy
inline void fc_backward_bias(const Tensor& dy, Tensor& db) {
  const std::size_t n = dy.dim(0), m = dy.dim(1);
  detail::expect(db.shape() == Shape{m}, "fc_backward_bias: output shape");
  auto dys = dy.data();
  auto dbs = db.data();
  std::fill(dbs.begin(), dbs.end(), 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) dbs[j] += dys[i * m + j];
  }
  detail::ensure_finite(db, "fc_backward_bias");
}

inline void fc_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx, Tensor& dw,
                        Tensor& db) {
  detail::expect(dy.rank() == 2 && dy.dim(0) == x.dim(0), "fc_backward: dy shape mismatch");
  fc_backward_data(w, dy, dx);
  fc_backward_weight(x, dy, dw);
  fc_backward_bias(dy, db);
}

struct ConvParams {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Output spatial extent, or throws if it is not integral and >= 1.
inline std::size_t conv_out_dim(std::size_t in, std::size_t kernel, ConvParams p) {
  detail::expect(p.stride >= 1, "conv: stride must be >= 1");
  const std::size_t padded = in + 2 * p.pad;
  detail::expect(padded >= kernel, "conv: kernel larger than padded input");
  detail::expect((padded - kernel) % p.stride == 0,
                 "conv: non-integral output dimension (" + std::to_string(in) + "+2*" +
                     std::to_string(p.pad) + "-" + std::to_string(kernel) + ")/" +
                     std::to_string(p.stride));
  return (padded - kernel) / p.stride + 1;
}

namespace detail {
struct ConvDims {
  std::size_t n, c, h, w, k, r, s, oh, ow;
};
inline ConvDims conv_dims(const Tensor& x, const Tensor& w, ConvParams p) {
  expect(x.rank() == 4 && w.rank() == 4, "conv: x and w must be rank 4");
  expect(x.dim(1) == w.dim(1), "conv: channel mismatch");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0};
  d.oh = conv_out_dim(d.h, d.r, p);
  d.ow = conv_out_dim(d.w, d.s, p);
  return d;
}
}  // namespace detail

/// Direct cross-correlation plus bias.
inline void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y,
                           ConvParams p) {
  const auto d = detail::conv_dims(x, w, p);
  detail::expect(b.shape() == Shape{d.k}, "conv_forward: bias shape");
  detail::expect(y.shape() == Shape{d.n, d.k, d.oh, d.ow},
                 "conv_forward: output shape " + shape_str(y.shape()));
  auto xs = x.data();
  auto wsp = w.data();
  auto ys = y.data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t k = 0; k < d.k; ++k) {
      for (std::size_t i = 0; i < d.oh; ++i) {
        for (std::size_t j = 0; j < d.ow; ++j) {
          float acc = b[k];
          for (std::size_t c = 0; c < d.c; ++c) {
            for (std::size_t r = 0; r < d.r; ++r) {
              const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(i * p.stride + r) -
                                        static_cast<std::ptrdiff_t>(p.pad);
              if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.h)) continue;
              for (std::size_t s = 0; s < d.s; ++s) {
                const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(j * p.stride + s) -
                                          static_cast<std::ptrdiff_t>(p.pad);
                if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(d.w)) continue;
                acc += xs[((n * d.c + c) * d.h + hi) * d.w + wi] *
                       wsp[((k * d.c + c) * d.r + r) * d.s + s];
              }
            }
          }
          ys[((n * d.k + k) * d.oh + i) * d.ow + j] = acc;
        }
      }
    }
  }
  detail::ensure_finite(y, "conv_forward");
}

namespace detail {
// Visits every (input element, weight element, output element) triple that
// contributes to the forward sum.
template <typename F>
void conv_for_each(const ConvDims& d, ConvParams p, F&& f) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t k = 0; k < d.k; ++k) {
      for (std::size_t i = 0; i < d.oh; ++i) {
        for (std::size_t j = 0; j < d.ow; ++j) {
          const std::size_t yi = ((n * d.k + k) * d.oh + i) * d.ow + j;
          for (std::size_t c = 0; c < d.c; ++c) {
            for (std::size_t r = 0; r < d.r; ++r) {
              const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(i * p.stride + r) -
                                        static_cast<std::ptrdiff_t>(p.pad);
              if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.h)) continue;
              for (std::size_t s = 0; s < d.s; ++s) {
                const std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(j * p.stride + s) -
                                          static_cast<std::ptrdiff_t>(p.pad);
                if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(d.w)) continue;
                f(((n * d.c + c) * d.h + hi) * d.w + wi, ((k * d.c + c) * d.r + r) * d.s + s, yi);
              }
            }
          }
        }
      }
    }
  }
}
}  // namespace detail

inline void conv2d_backward_data(const Tensor& w, const Tensor& dy, Tensor& dx, ConvParams p) {
  const auto d = detail::conv_dims(dx, w, p);
  detail::expect(dy.shape() == Shape{d.n, d.k, d.oh, d.ow}, "conv_backward_data: dy shape");
  auto dxs = dx.data();
  auto wsp = w.data();
  auto dys = dy.data();
  std::fill(dxs.begin(), dxs.end(), 0.0f);
  detail::conv_for_each(d, p, [&](std::size_t xi, std::size_t wi, std::size_t yi) {
    dxs[xi] += wsp[wi] * dys[yi];
  });
  detail::ensure_finite(dx, "conv_backward_data");
}

inline void conv2d_backward_weight(const Tensor& x, const Tensor& dy, Tensor& dw, ConvParams p) {
  const auto d = detail::conv_dims(x, dw, p);
  detail::expect(dy.shape() == Shape{d.n, d.k, d.oh, d.ow}, "conv_backward_weight: dy shape");
  auto xs = x.data();
  auto dws = dw.data();
  auto dys = dy.data();
  std::fill(dws.begin(), dws.end(), 0.0f);
  detail::conv_for_each(d, p, [&](std::size_t xi, std::size_t wi, std::size_t yi) {
    dws[wi] += xs[xi] * dys[yi];
  });
  detail::ensure_finite(dw, "conv_backward_weight");
}

/// db[k] = sum of dy over N, H', W'
inline void conv2d_backward_bias(const Tensor& dy, Tensor& db) {
  detail::expect(dy.rank() == 4 && db.shape() == Shape{dy.dim(1)}, "conv_backward_bias: shape");
  const std::size_t n = dy.dim(0), k = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
  auto dys = dy.data();
  auto dbs = db.data();
  std::fill(dbs.begin(), dbs.end(), 0.0f);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t q = 0; q < hw; ++q) dbs[c] += dys[(a * k + c) * hw + q];
    }
  }
  detail::ensure_finite(db, "conv_backward_bias");
}

inline void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dx,
                            Tensor& dw, Tensor& db, ConvParams p) {
  detail::expect(dx.shape() == x.shape(), "conv_backward: dx shape");
  conv2d_backward_data(w, dy, dx, p);
  conv2d_backward_weight(x, dy, dw, p);
  conv2d_backward_bias(dy, db);
}

inline void relu_forward(const Tensor& x, Tensor& y) {
  detail::expect(x.shape() == y.shape(), "relu_forward: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

/// Subgradient at 0 is 0.
inline void relu_backward(const Tensor& x, const Tensor& dy, Tensor& dx) {
  detail::expect(x.shape() == dy.shape() && dx.shape() == x.shape(), "relu_backward: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

/// Mean softmax cross-entropy over rows. `labels` holds integral class ids.
/// dlogits = (softmax - onehot) / N.
inline void softmax_xent(const Tensor& logits, const Tensor& labels, Tensor& loss, Tensor& dlogits) {
  using detail::expect;
  expect(logits.rank() == 2, "softmax_xent: logits must be [N,K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  expect(labels.size() == n, "softmax_xent: labels must have N entries");
  expect(loss.size() == 1, "softmax_xent: loss must be a scalar");
  expect(dlogits.shape() == logits.shape(), "softmax_xent: dlogits shape");
  auto z = logits.data();
  auto g = dlogits.data();
  float total = 0.0f;
  const float inv_n = 1.0f / static_cast<float>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float lf = labels[i];
    expect(lf >= 0.0f && lf < static_cast<float>(k) && std::floor(lf) == lf,
           "softmax_xent: label " + std::to_string(lf) + " out of range [0," + std::to_string(k) +
               ")");
    const auto label = static_cast<std::size_t>(lf);
    const float* row = &z[i * k];
    const float mx = *std::max_element(row, row + k);
    float sum = 0.0f;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const float log_sum = std::log(sum);
    total += log_sum - (row[label] - mx);
    for (std::size_t j = 0; j < k; ++j) {
      const float p = std::exp(row[j] - mx - log_sum);
      g[i * k + j] = (p - (j == label ? 1.0f : 0.0f)) * inv_n;
    }
  }
  loss[0] = total * inv_n;
  detail::ensure_finite(loss, "softmax_xent");
  detail::ensure_finite(dlogits, "softmax_xent");
}

/// w_new = w - lr * grad, into a distinct output.
inline void sgd_update(const Tensor& w, const Tensor& grad, float lr, Tensor& w_new) {
  detail::expect(w.shape() == grad.shape() && w_new.shape() == w.shape(),
                 "sgd_update: shape mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) w_new[i] = w[i] - lr * grad[i];
  detail::ensure_finite(w_new, "sgd_update");
}

enum class AggregateMode { kSum, kMean };

/// Elementwise sum or mean of `parts`, accumulated in double in part order.
/// The mean of k identical tensors is bit-identical to the tensor.
inline void aggregate(std::span<const Tensor* const> parts, AggregateMode mode, Tensor& out) {
  detail::expect(!parts.empty(), "aggregate: needs at least one part");
  for (const auto* p : parts) {
    detail::expect(p->shape() == out.shape(), "aggregate: shape mismatch " +
                                                  shape_str(p->shape()) + " vs " +
                                                  shape_str(out.shape()));
  }
  const double k = static_cast<double>(parts.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (const auto* p : parts) acc += (*p)[i];
    out[i] = static_cast<float>(mode == AggregateMode::kMean ? acc / k : acc);
  }
  detail::ensure_finite(out, "aggregate");
}

inline void copy(const Tensor& src, Tensor& dst) {
  detail::expect(src.shape() == dst.shape(), "copy: shape mismatch " + shape_str(src.shape()) +
                                                 " vs " + shape_str(dst.shape()));
  std::memcpy(dst.data().data(), src.data().data(), src.size() * sizeof(float));
}

}  // namespace bigraph::kernels
