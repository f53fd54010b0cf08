// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "kernels.hpp"

namespace sonarseg::ops {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
void require_rank(const Tensor<T>& t, Index rank, const char* what) {
  require(t.rank() == rank, std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(t.shape()));
}

template <typename T>
void accumulate(Node<T>& parent, const Tensor<T>& g) {
  if (!parent.requires_grad) return;
  auto& buf = parent.grad_buffer();
  T* d = buf.data();
  const T* s = g.data();
  const Index n = g.numel();
#pragma omp simd
  for (Index i = 0; i < n; ++i) d[i] += s[i];
}

template <typename T>
void im2col(const T* x, Index C, Index H, Index W, int k, int stride, int pad, Index Ho, Index Wo, T* cols) {
  for (Index c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * Ho * Wo;
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          T* r = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(r, r + Wo, T{0});
            continue;
          }
          const T* xin = x + (c * H + iy) * W;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            r[ox] = (ix >= 0 && ix < W) ? xin[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, Index C, Index H, Index W, int k, int stride, int pad, Index Ho, Index Wo, T* x) {
  for (Index c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * Ho * Wo;
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* xout = x + (c * H + iy) * W;
          const T* r = row + oy * Wo;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) xout[ix] += r[ox];
          }
        }
      }
    }
  }
}

// Valid output range [lo, hi) for an offset `off` along an axis of length n.
inline void tap_range(Index n, Index off, Index& lo, Index& hi) {
  lo = std::max<Index>(0, -off);
  hi = std::min<Index>(n, n - off);
}

struct Resample {
  std::vector<Index> i0, i1;
  std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

Resample resample_axis(Index in, Index out) {
  Resample r;
  r.i0.resize(static_cast<std::size_t>(out));
  r.i1.resize(static_cast<std::size_t>(out));
  r.w1.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    Index lo = static_cast<Index>(src);
    if (lo > in - 1) lo = in - 1;
    const Index hi = lo < in - 1 ? lo + 1 : lo;
    r.i0[o] = lo;
    r.i1[o] = hi;
    r.w1[o] = src - static_cast<double>(lo);
  }
  return r;
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->value.shape() == b->value.shape(),
          "add: shape mismatch " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  Tensor<T> out = a->value;
  kernels::axpy(T{1}, b->value.data(), out.data(), out.numel());
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  const auto& X = x->value;
  const auto& Wt = weight->value;
  require_rank(X, 4, "conv2d input");
  require_rank(Wt, 4, "conv2d weight");
  const Index B = X.dim(0), Ci = X.dim(1), H = X.dim(2), W = X.dim(3);
  const Index Co = Wt.dim(0);
  const int k = static_cast<int>(Wt.dim(2));
  require(Wt.dim(1) == Ci && Wt.dim(3) == k, "conv2d: weight " + shape_str(Wt.shape()) + " vs input " +
                                                  shape_str(X.shape()));
  const Index Ho = (H + 2 * padding - k) / stride + 1;
  const Index Wo = (W + 2 * padding - k) / stride + 1;
  require(Ho > 0 && Wo > 0, "conv2d: empty output");
  const Index K = Ci * k * k, P = Ho * Wo;

  Tensor<T> out({B, Co, Ho, Wo});
  std::vector<T> cols(static_cast<std::size_t>(K * P));
  for (Index b = 0; b < B; ++b) {
    im2col(X.data() + b * Ci * H * W, Ci, H, W, k, stride, padding, Ho, Wo, cols.data());
    T* o = out.data() + b * Co * P;
    kernels::gemm(false, false, Co, P, K, Wt.data(), cols.data(), o, false);
    if (bias) {
      for (Index c = 0; c < Co; ++c) {
        const T bv = bias->value[c];
        for (Index p = 0; p < P; ++p) o[c * P + p] += bv;
      }
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents),
                        [=](Node<T>& self) {
                          const auto& X = self.parents[0]->value;
                          const auto& Wt = self.parents[1]->value;
                          const T* G = self.grad.data();
                          std::vector<T> cols(static_cast<std::size_t>(K * P));
                          Tensor<T> dW(Wt.shape());
                          Tensor<T> dX(X.shape());
                          for (Index b = 0; b < B; ++b) {
                            const T* g = G + b * Co * P;
                            if (self.parents[1]->requires_grad) {
                              im2col(X.data() + b * Ci * H * W, Ci, H, W, k, stride, padding, Ho, Wo, cols.data());
                              kernels::gemm(false, true, Co, K, P, g, cols.data(), dW.data(), true);
                            }
                            if (self.parents[0]->requires_grad) {
                              kernels::gemm(true, false, K, P, Co, Wt.data(), g, cols.data(), false);
                              col2im(cols.data(), Ci, H, W, k, stride, padding, Ho, Wo, dX.data() + b * Ci * H * W);
                            }
                          }
                          accumulate(*self.parents[0], dX);
                          accumulate(*self.parents[1], dW);
                          if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                            Tensor<T> db({Co});
                            for (Index b = 0; b < B; ++b)
                              for (Index c = 0; c < Co; ++c) {
                                const T* g = G + (b * Co + c) * P;
                                T s{0};
                                for (Index p = 0; p < P; ++p) s += g[p];
                                db[c] += s;
                              }
                            accumulate(*self.parents[2], db);
                          }
                        });
}

template <typename T>
Var<T> depthwise_conv3x3(const Var<T>& x, const Var<T>& weight, int dilation) {
  const auto& X = x->value;
  require_rank(X, 4, "depthwise_conv3x3 input");
  const Index B = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  require(weight->value.numel() == C * 9, "depthwise_conv3x3: weight " + shape_str(weight->value.shape()) +
                                              " does not match " + std::to_string(C) + " channels");
  require(dilation >= 1, "depthwise_conv3x3: dilation must be positive");
  const Index d = dilation;

  Tensor<T> out(X.shape());
  const T* wt = weight->value.data();
  for (Index b = 0; b < B; ++b) {
    for (Index c = 0; c < C; ++c) {
      const T* in = X.data() + (b * C + c) * H * W;
      T* o = out.data() + (b * C + c) * H * W;
      for (int tap = 0; tap < 9; ++tap) {
        const Index dy = (tap / 3 - 1) * d, dx = (tap % 3 - 1) * d;
        const T wv = wt[c * 9 + tap];
        Index y0, y1, x0, x1;
        tap_range(H, dy, y0, y1);
        tap_range(W, dx, x0, x1);
        for (Index y = y0; y < y1; ++y) {
          kernels::axpy(wv, in + (y + dy) * W + x0 + dx, o + y * W + x0, x1 - x0);
        }
      }
    }
  }

  return make_result<T>(std::move(out), {x, weight}, [=](Node<T>& self) {
    const auto& X = self.parents[0]->value;
    const T* wt = self.parents[1]->value.data();
    const bool need_x = self.parents[0]->requires_grad;
    const bool need_w = self.parents[1]->requires_grad;
    Tensor<T> dX(need_x ? X.shape() : Shape{0});
    Tensor<T> dW(need_w ? self.parents[1]->value.shape() : Shape{0});
    for (Index b = 0; b < B; ++b) {
      for (Index c = 0; c < C; ++c) {
        const T* in = X.data() + (b * C + c) * H * W;
        const T* g = self.grad.data() + (b * C + c) * H * W;
        for (int tap = 0; tap < 9; ++tap) {
          const Index dy = (tap / 3 - 1) * d, dx = (tap % 3 - 1) * d;
          Index y0, y1, x0, x1;
          tap_range(H, dy, y0, y1);
          tap_range(W, dx, x0, x1);
          if (x1 <= x0) continue;
          if (need_x) {
            T* dx_plane = dX.data() + (b * C + c) * H * W;
            const T wv = wt[c * 9 + tap];
            for (Index y = y0; y < y1; ++y) kernels::axpy(wv, g + y * W + x0, dx_plane + (y + dy) * W + x0 + dx, x1 - x0);
          }
          if (need_w) {
            T s{0};
            for (Index y = y0; y < y1; ++y) s += kernels::dot(g + y * W + x0, in + (y + dy) * W + x0 + dx, x1 - x0);
            dW[c * 9 + tap] += s;
          }
        }
      }
    }
    if (need_x) accumulate(*self.parents[0], dX);
    if (need_w) accumulate(*self.parents[1], dW);
  });
}

template <typename T>
Var<T> pointwise(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& X = x->value;
  require_rank(X, 4, "pointwise input");
  const Index B = X.dim(0), Ci = X.dim(1), P = X.dim(2) * X.dim(3);
  const Index Co = weight->value.dim(0);
  require(weight->value.rank() == 2 && weight->value.dim(1) == Ci,
          "pointwise: weight " + shape_str(weight->value.shape()) + " vs input " + shape_str(X.shape()));

  Tensor<T> out({B, Co, X.dim(2), X.dim(3)});
  for (Index b = 0; b < B; ++b) {
    T* o = out.data() + b * Co * P;
    kernels::gemm(false, false, Co, P, Ci, weight->value.data(), X.data() + b * Ci * P, o, false);
    if (bias) {
      for (Index c = 0; c < Co; ++c) {
        const T bv = bias->value[c];
        T* r = o + c * P;
        for (Index p = 0; p < P; ++p) r[p] += bv;
      }
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), [=](Node<T>& self) {
    const auto& X = self.parents[0]->value;
    const auto& Wt = self.parents[1]->value;
    const T* G = self.grad.data();
    if (self.parents[0]->requires_grad) {
      Tensor<T> dX(X.shape());
      for (Index b = 0; b < B; ++b)
        kernels::gemm(true, false, Ci, P, Co, Wt.data(), G + b * Co * P, dX.data() + b * Ci * P, false);
      accumulate(*self.parents[0], dX);
    }
    if (self.parents[1]->requires_grad) {
      Tensor<T> dW(Wt.shape());
      for (Index b = 0; b < B; ++b)
        kernels::gemm(false, true, Co, Ci, P, G + b * Co * P, X.data() + b * Ci * P, dW.data(), true);
      accumulate(*self.parents[1], dW);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Tensor<T> db({Co});
      for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < Co; ++c) {
          const T* g = G + (b * Co + c) * P;
          T s{0};
          for (Index p = 0; p < P; ++p) s += g[p];
          db[c] += s;
        }
      accumulate(*self.parents[2], db);
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& X = x->value;
  const Index Ci = X.dim(-1);
  const Index rows = X.numel() / Ci;
  const auto& Wt = weight->value;
  require(Wt.rank() == 2 && Wt.dim(1) == Ci,
          "linear: weight " + shape_str(Wt.shape()) + " vs input " + shape_str(X.shape()));
  const Index Co = Wt.dim(0);
  Shape out_shape = X.shape();
  out_shape.back() = Co;

  Tensor<T> out(out_shape);
  kernels::gemm(false, true, rows, Co, Ci, X.data(), Wt.data(), out.data(), false);
  if (bias) {
    for (Index r = 0; r < rows; ++r) kernels::axpy(T{1}, bias->value.data(), out.data() + r * Co, Co);
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), [=](Node<T>& self) {
    const T* G = self.grad.data();
    if (self.parents[0]->requires_grad) {
      Tensor<T> dX(self.parents[0]->value.shape());
      kernels::gemm(false, false, rows, Ci, Co, G, self.parents[1]->value.data(), dX.data(), false);
      accumulate(*self.parents[0], dX);
    }
    if (self.parents[1]->requires_grad) {
      Tensor<T> dW(self.parents[1]->value.shape());
      kernels::gemm(true, false, Co, Ci, rows, G, self.parents[0]->value.data(), dW.data(), false);
      accumulate(*self.parents[1], dW);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Tensor<T> db({Co});
      for (Index r = 0; r < rows; ++r) kernels::axpy(T{1}, G + r * Co, db.data(), Co);
      accumulate(*self.parents[2], db);
    }
  });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const auto& X = x->value;
  require_rank(X, 4, "group_norm input");
  const Index B = X.dim(0), C = X.dim(1), P = X.dim(2) * X.dim(3);
  require(gamma->value.numel() == C && beta->value.numel() == C, "group_norm: affine size mismatch");
  const Index M = C * P;

  Tensor<T> out(X.shape());
  Tensor<T> xhat(X.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(B));
  for (Index b = 0; b < B; ++b) {
    const T* in = X.data() + b * M;
    double s = 0;
    for (Index i = 0; i < M; ++i) s += in[i];
    const double mean = s / static_cast<double>(M);
    double v = 0;
    for (Index i = 0; i < M; ++i) {
      const double dv = in[i] - mean;
      v += dv * dv;
    }
    const double istd = 1.0 / std::sqrt(v / static_cast<double>(M) + eps);
    inv_std[b] = static_cast<T>(istd);
    const T m = static_cast<T>(mean), is = static_cast<T>(istd);
    for (Index c = 0; c < C; ++c) {
      const T g = gamma->value[c], be = beta->value[c];
      const T* src = in + c * P;
      T* xh = xhat.data() + b * M + c * P;
      T* o = out.data() + b * M + c * P;
      for (Index p = 0; p < P; ++p) {
        xh[p] = (src[p] - m) * is;
        o[p] = g * xh[p] + be;
      }
    }
  }

  return make_result<T>(std::move(out), {x, gamma, beta},
                        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
                          const T* G = self.grad.data();
                          const auto& gam = self.parents[1]->value;
                          Tensor<T> dX(xhat.shape());
                          Tensor<T> dg({C});
                          Tensor<T> db({C});
                          for (Index b = 0; b < B; ++b) {
                            double sum_g = 0, sum_gx = 0;
                            for (Index c = 0; c < C; ++c) {
                              const T* g = G + b * M + c * P;
                              const T* xh = xhat.data() + b * M + c * P;
                              double cg = 0, cgx = 0;
                              for (Index p = 0; p < P; ++p) {
                                cg += g[p];
                                cgx += g[p] * xh[p];
                              }
                              db[c] += static_cast<T>(cg);
                              dg[c] += static_cast<T>(cgx);
                              sum_g += gam[c] * cg;
                              sum_gx += gam[c] * cgx;
                            }
                            const T mg = static_cast<T>(sum_g / static_cast<double>(M));
                            const T mgx = static_cast<T>(sum_gx / static_cast<double>(M));
                            const T is = inv_std[b];
                            for (Index c = 0; c < C; ++c) {
                              const T* g = G + b * M + c * P;
                              const T* xh = xhat.data() + b * M + c * P;
                              T* d = dX.data() + b * M + c * P;
                              const T gc = gam[c];
                              for (Index p = 0; p < P; ++p) d[p] = is * (gc * g[p] - mg - xh[p] * mgx);
                            }
                          }
                          accumulate(*self.parents[0], dX);
                          accumulate(*self.parents[1], dg);
                          accumulate(*self.parents[2], db);
                        });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const auto& X = x->value;
  const Index C = X.dim(-1);
  const Index rows = X.numel() / C;
  require(gamma->value.numel() == C && beta->value.numel() == C, "layer_norm: affine size mismatch");

  Tensor<T> out(X.shape());
  Tensor<T> xhat(X.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  const T* gm = gamma->value.data();
  const T* bt = beta->value.data();
  for (Index r = 0; r < rows; ++r) {
    const T* in = X.data() + r * C;
    T s{0};
    for (Index c = 0; c < C; ++c) s += in[c];
    const T mean = s / static_cast<T>(C);
    T v{0};
    for (Index c = 0; c < C; ++c) v += (in[c] - mean) * (in[c] - mean);
    const T is = T{1} / std::sqrt(v / static_cast<T>(C) + static_cast<T>(eps));
    inv_std[r] = is;
    T* xh = xhat.data() + r * C;
    T* o = out.data() + r * C;
    for (Index c = 0; c < C; ++c) {
      xh[c] = (in[c] - mean) * is;
      o[c] = gm[c] * xh[c] + bt[c];
    }
  }

  return make_result<T>(std::move(out), {x, gamma, beta},
                        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
                          const T* G = self.grad.data();
                          const T* gm = self.parents[1]->value.data();
                          Tensor<T> dX(xhat.shape());
                          Tensor<T> dg({C});
                          Tensor<T> db({C});
                          for (Index r = 0; r < rows; ++r) {
                            const T* g = G + r * C;
                            const T* xh = xhat.data() + r * C;
                            T* d = dX.data() + r * C;
                            T sg{0}, sgx{0};
                            for (Index c = 0; c < C; ++c) {
                              const T gg = g[c] * gm[c];
                              sg += gg;
                              sgx += gg * xh[c];
                              dg[c] += g[c] * xh[c];
                              db[c] += g[c];
                            }
                            sg /= static_cast<T>(C);
                            sgx /= static_cast<T>(C);
                            for (Index c = 0; c < C; ++c) d[c] = inv_std[r] * (g[c] * gm[c] - sg - xh[c] * sgx);
                          }
                          accumulate(*self.parents[0], dX);
                          accumulate(*self.parents[1], dg);
                          accumulate(*self.parents[2], db);
                        });
}

namespace {
thread_local KinkMonitor* g_kink_monitor = nullptr;
}  // namespace

KinkMonitor::KinkMonitor() : previous_(g_kink_monitor) { g_kink_monitor = this; }
KinkMonitor::~KinkMonitor() { g_kink_monitor = previous_; }
KinkMonitor* KinkMonitor::active() { return g_kink_monitor; }

template <typename T>
Var<T> hardswish(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* in = x->value.data();
  T* o = out.data();
  if (auto* m = KinkMonitor::active()) {
    for (Index i = 0; i < out.numel(); ++i) m->record(in[i] < T{-3} ? 0 : (in[i] <= T{3} ? 1 : 2));
  }
  for (Index i = 0; i < out.numel(); ++i) {
    const T v = in[i];
    o[i] = v * std::clamp(v + T{3}, T{0}, T{6}) / T{6};
  }
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    const auto& X = self.parents[0]->value;
    Tensor<T> dX(X.shape());
    for (Index i = 0; i < X.numel(); ++i) {
      const T v = X[i];
      const T slope = v < T{-3} ? T{0} : (v <= T{3} ? (T{2} * v + T{3}) / T{6} : T{1});
      dX[i] = slope * self.grad[i];
    }
    accumulate(*self.parents[0], dX);
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  for (Index i = 0; i < out.numel(); ++i) {
    const T v = x->value[i];
    out[i] = T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2));
  }
  return make_result<T>(std::move(out), {x}, [inv_sqrt2](Node<T>& self) {
    const auto& X = self.parents[0]->value;
    const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    Tensor<T> dX(X.shape());
    for (Index i = 0; i < X.numel(); ++i) {
      const T v = X[i];
      const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
      dX[i] = (cdf + v * pdf) * self.grad[i];
    }
    accumulate(*self.parents[0], dX);
  });
}

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  const auto& X = x->value;
  require_rank(X, 4, "avg_pool2 input");
  const Index B = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "avg_pool2: spatial dims must be even, got " + shape_str(X.shape()));
  const Index Ho = H / 2, Wo = W / 2;
  Tensor<T> out({B, C, Ho, Wo});
  for (Index bc = 0; bc < B * C; ++bc) {
    const T* in = X.data() + bc * H * W;
    T* o = out.data() + bc * Ho * Wo;
    for (Index y = 0; y < Ho; ++y) {
      const T* r0 = in + 2 * y * W;
      const T* r1 = r0 + W;
      for (Index xo = 0; xo < Wo; ++xo)
        o[y * Wo + xo] = T{0.25} * (r0[2 * xo] + r0[2 * xo + 1] + r1[2 * xo] + r1[2 * xo + 1]);
    }
  }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    Tensor<T> dX({B, C, H, W});
    for (Index bc = 0; bc < B * C; ++bc) {
      const T* g = self.grad.data() + bc * Ho * Wo;
      T* d = dX.data() + bc * H * W;
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx) d[y * W + xx] = T{0.25} * g[(y / 2) * Wo + xx / 2];
    }
    accumulate(*self.parents[0], dX);
  });
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, Index out_h, Index out_w) {
  const auto& X = x->value;
  require_rank(X, 4, "upsample_bilinear input");
  require(out_h > 0 && out_w > 0, "upsample_bilinear: empty output size");
  const Index B = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  if (H == out_h && W == out_w) {
    // Half-pixel resampling at scale 1 hits source pixels exactly.
    return make_result<T>(X, {x}, [](Node<T>& self) { accumulate(*self.parents[0], self.grad); });
  }
  auto ry = resample_axis(H, out_h);
  auto rx = resample_axis(W, out_w);
  Tensor<T> out({B, C, out_h, out_w});
  std::vector<T> row(static_cast<std::size_t>(out_w));
  for (Index bc = 0; bc < B * C; ++bc) {
    const T* in = X.data() + bc * H * W;
    T* o = out.data() + bc * out_h * out_w;
    for (Index y = 0; y < out_h; ++y) {
      const T wy1 = static_cast<T>(ry.w1[y]), wy0 = T{1} - wy1;
      const T* a = in + ry.i0[y] * W;
      const T* b = in + ry.i1[y] * W;
      T* orow = o + y * out_w;
      for (Index xx = 0; xx < out_w; ++xx) {
        const T wx1 = static_cast<T>(rx.w1[xx]), wx0 = T{1} - wx1;
        const Index x0 = rx.i0[xx], x1 = rx.i1[xx];
        orow[xx] = wy0 * (wx0 * a[x0] + wx1 * a[x1]) + wy1 * (wx0 * b[x0] + wx1 * b[x1]);
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [=, ry = std::move(ry), rx = std::move(rx)](Node<T>& self) {
    Tensor<T> dX({B, C, H, W});
    for (Index bc = 0; bc < B * C; ++bc) {
      const T* g = self.grad.data() + bc * out_h * out_w;
      T* d = dX.data() + bc * H * W;
      for (Index y = 0; y < out_h; ++y) {
        const T wy1 = static_cast<T>(ry.w1[y]), wy0 = T{1} - wy1;
        T* a = d + ry.i0[y] * W;
        T* b = d + ry.i1[y] * W;
        const T* grow = g + y * out_w;
        for (Index xx = 0; xx < out_w; ++xx) {
          const T wx1 = static_cast<T>(rx.w1[xx]), wx0 = T{1} - wx1;
          const Index x0 = rx.i0[xx], x1 = rx.i1[xx];
          const T gv = grow[xx];
          a[x0] += wy0 * wx0 * gv;
          a[x1] += wy0 * wx1 * gv;
          b[x0] += wy1 * wx0 * gv;
          b[x1] += wy1 * wx1 * gv;
        }
      }
    }
    accumulate(*self.parents[0], dX);
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const auto& first = xs.front()->value;
  require_rank(first, 4, "concat_channels input");
  const Index B = first.dim(0), H = first.dim(2), W = first.dim(3), P = H * W;
  Index C = 0;
  std::vector<Index> widths;
  for (const auto& v : xs) {
    const auto& t = v->value;
    require(t.rank() == 4 && t.dim(0) == B && t.dim(2) == H && t.dim(3) == W,
            "concat_channels: incompatible " + shape_str(t.shape()) + " vs " + shape_str(first.shape()));
    widths.push_back(t.dim(1));
    C += t.dim(1);
  }
  Tensor<T> out({B, C, H, W});
  for (Index b = 0; b < B; ++b) {
    Index off = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const T* src = xs[i]->value.data() + b * widths[i] * P;
      std::copy(src, src + widths[i] * P, out.data() + (b * C + off) * P);
      off += widths[i];
    }
  }
  return make_result<T>(std::move(out), xs, [=](Node<T>& self) {
    Index off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (p.requires_grad) {
        Tensor<T> d(p.value.shape());
        for (Index b = 0; b < B; ++b) {
          const T* src = self.grad.data() + (b * C + off) * P;
          std::copy(src, src + widths[i] * P, d.data() + b * widths[i] * P);
        }
        accumulate(p, d);
      }
      off += widths[i];
    }
  });
}

template <typename T>
Var<T> to_tokens(const Var<T>& x) {
  const auto& X = x->value;
  require_rank(X, 4, "to_tokens input");
  const Index B = X.dim(0), C = X.dim(1), P = X.dim(2) * X.dim(3);
  Tensor<T> out({B, P, C});
  for (Index b = 0; b < B; ++b) kernels::transpose(X.data() + b * C * P, C, P, out.data() + b * P * C);
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    Tensor<T> dX(self.parents[0]->value.shape());
    for (Index b = 0; b < B; ++b) kernels::transpose(self.grad.data() + b * P * C, P, C, dX.data() + b * C * P);
    accumulate(*self.parents[0], dX);
  });
}

template <typename T>
Var<T> from_tokens(const Var<T>& x, Index h, Index w) {
  const auto& X = x->value;
  require_rank(X, 3, "from_tokens input");
  const Index B = X.dim(0), N = X.dim(1), C = X.dim(2);
  require(h > 0 && w > 0 && h * w == N, "from_tokens: grid " + std::to_string(h) + "x" + std::to_string(w) +
                                            " does not match " + std::to_string(N) + " tokens");
  Tensor<T> out({B, C, h, w});
  for (Index b = 0; b < B; ++b) kernels::transpose(X.data() + b * N * C, N, C, out.data() + b * C * N);
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    Tensor<T> dX({B, N, C});
    for (Index b = 0; b < B; ++b) kernels::transpose(self.grad.data() + b * C * N, C, N, dX.data() + b * N * C);
    accumulate(*self.parents[0], dX);
  });
}

template <typename T>
Var<T> simxca_core(const Var<T>& qkv, int heads, double eps) {
  const auto& X = qkv->value;
  require_rank(X, 3, "simxca_core input");
  const Index B = X.dim(0), N = X.dim(1), C3 = X.dim(2);
  require(C3 % 3 == 0, "simxca_core: channel count must be 3*C");
  const Index C = C3 / 3;
  require(N > 0, "simxca_core: empty token sequence");
  require(heads > 0 && C % heads == 0,
          "simxca_core: " + std::to_string(C) + " channels not divisible by " + std::to_string(heads) + " heads");
  const Index d = C / heads;

  // Per (batch, channel) L1 denominators for Q and K, and per (batch, head)
  // d x d attention matrices.
  Tensor<T> q_den({B, C}), k_den({B, C});
  Tensor<T> attn({B, heads, d, d});
  Tensor<T> out({B, N, C});
  for (Index b = 0; b < B; ++b) {
    const T* base = X.data() + b * N * C3;
    T* qd = q_den.data() + b * C;
    T* kd = k_den.data() + b * C;
    for (Index n = 0; n < N; ++n) {
      const T* row = base + n * C3;
      for (Index c = 0; c < C; ++c) {
        qd[c] += std::abs(row[c]);
        kd[c] += std::abs(row[C + c]);
      }
      if (auto* m = KinkMonitor::active()) {
        for (Index c = 0; c < 2 * C; ++c) m->record(row[c] < T{0});
      }
    }
    for (Index c = 0; c < C; ++c) {
      qd[c] += static_cast<T>(eps);
      kd[c] += static_cast<T>(eps);
    }
    for (Index h = 0; h < heads; ++h) {
      T* A = attn.data() + (b * heads + h) * d * d;
      const Index c0 = h * d;
      std::vector<T> qn(static_cast<std::size_t>(d)), kn(static_cast<std::size_t>(d));
      for (Index n = 0; n < N; ++n) {
        const T* row = base + n * C3;
        for (Index i = 0; i < d; ++i) {
          qn[i] = row[c0 + i] / qd[c0 + i];
          kn[i] = row[C + c0 + i] / kd[c0 + i];
        }
        for (Index i = 0; i < d; ++i) kernels::axpy(qn[i], kn.data(), A + i * d, d);
      }
      for (Index n = 0; n < N; ++n) {
        const T* v = base + n * C3 + 2 * C + c0;
        T* o = out.data() + (b * N + n) * C + c0;
        for (Index i = 0; i < d; ++i) kernels::axpy(v[i], A + i * d, o, d);
      }
    }
  }

  return make_result<T>(
      std::move(out), {qkv},
      [=, q_den = std::move(q_den), k_den = std::move(k_den), attn = std::move(attn)](Node<T>& self) {
        const auto& X = self.parents[0]->value;
        Tensor<T> dX(X.shape());
        std::vector<T> dA(static_cast<std::size_t>(d * d));
        std::vector<T> dqn(static_cast<std::size_t>(N * d)), dkn(static_cast<std::size_t>(N * d));
        for (Index b = 0; b < B; ++b) {
          const T* base = X.data() + b * N * C3;
          T* dbase = dX.data() + b * N * C3;
          const T* G = self.grad.data() + b * N * C;
          for (Index h = 0; h < heads; ++h) {
            const T* A = attn.data() + (b * heads + h) * d * d;
            const Index c0 = h * d;
            const T* qd = q_den.data() + b * C + c0;
            const T* kd = k_den.data() + b * C + c0;
            std::fill(dA.begin(), dA.end(), T{0});
            // out = V A: dV = G A^T, dA = V^T G.
            for (Index n = 0; n < N; ++n) {
              const T* v = base + n * C3 + 2 * C + c0;
              const T* g = G + n * C + c0;
              T* dv = dbase + n * C3 + 2 * C + c0;
              for (Index i = 0; i < d; ++i) {
                dv[i] += kernels::dot(g, A + i * d, d);
                kernels::axpy(v[i], g, dA.data() + i * d, d);
              }
            }
            // A = Qn^T Kn: dQn = Kn dA^T, dKn = Qn dA.
            for (Index n = 0; n < N; ++n) {
              const T* row = base + n * C3;
              T* dq = dqn.data() + n * d;
              T* dk = dkn.data() + n * d;
              std::fill(dk, dk + d, T{0});
              for (Index i = 0; i < d; ++i) {
                T s{0};
                for (Index j = 0; j < d; ++j) s += dA[i * d + j] * (row[C + c0 + j] / kd[j]);
                dq[i] = s;
                kernels::axpy(row[c0 + i] / qd[i], dA.data() + i * d, dk, d);
              }
            }
            // L1 normalization: y = x / (sum|x| + eps).
            for (Index i = 0; i < d; ++i) {
              T sq{0}, sk{0};
              for (Index n = 0; n < N; ++n) {
                const T* row = base + n * C3;
                sq += dqn[n * d + i] * row[c0 + i];
                sk += dkn[n * d + i] * row[C + c0 + i];
              }
              const T iq = T{1} / qd[i], ik = T{1} / kd[i];
              const T cq = sq * iq * iq, ck = sk * ik * ik;
              for (Index n = 0; n < N; ++n) {
                const T* row = base + n * C3;
                T* drow = dbase + n * C3;
                const T xq = row[c0 + i], xk = row[C + c0 + i];
                const T sgq = xq > 0 ? T{1} : (xq < 0 ? T{-1} : T{0});
                const T sgk = xk > 0 ? T{1} : (xk < 0 ? T{-1} : T{0});
                drow[c0 + i] += dqn[n * d + i] * iq - sgq * cq;
                drow[C + c0 + i] += dkn[n * d + i] * ik - sgk * ck;
              }
            }
          }
        }
        accumulate(*self.parents[0], dX);
      });
}

template <typename T>
Var<T> weighted_cross_entropy(const Var<T>& logits, std::span<const std::uint8_t> labels,
                              std::span<const double> class_weights, std::uint8_t ignore) {
  const auto& L = logits->value;
  require_rank(L, 4, "weighted_cross_entropy logits");
  const Index B = L.dim(0), K = L.dim(1), P = L.dim(2) * L.dim(3);
  require(static_cast<Index>(labels.size()) == B * P,
          "weighted_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + shape_str(L.shape()));
  require(static_cast<Index>(class_weights.size()) == K, "weighted_cross_entropy: need one weight per class");

  Index count = 0;
  double total = 0;
  Tensor<T> probs(L.shape());
  std::vector<double> logit(static_cast<std::size_t>(K));
  for (Index b = 0; b < B; ++b) {
    for (Index p = 0; p < P; ++p) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index k = 0; k < K; ++k) {
        logit[k] = L[(b * K + k) * P + p];
        mx = std::max(mx, logit[k]);
      }
      double z = 0;
      for (Index k = 0; k < K; ++k) z += std::exp(logit[k] - mx);
      for (Index k = 0; k < K; ++k) probs[(b * K + k) * P + p] = static_cast<T>(std::exp(logit[k] - mx) / z);
      const std::uint8_t y = labels[static_cast<std::size_t>(b * P + p)];
      if (y == ignore) continue;
      require(y < K, "weighted_cross_entropy: label " + std::to_string(y) + " out of range");
      ++count;
      total += class_weights[y] * (std::log(z) + mx - logit[y]);
    }
  }
  if (count == 0) throw std::invalid_argument("weighted_cross_entropy: every pixel is ignored");

  Tensor<T> out({1}, static_cast<T>(total / static_cast<double>(count)));
  std::vector<std::uint8_t> labs(labels.begin(), labels.end());
  std::vector<double> weights(class_weights.begin(), class_weights.end());
  return make_result<T>(std::move(out), {logits},
                        [=, probs = std::move(probs), labs = std::move(labs),
                         weights = std::move(weights)](Node<T>& self) {
                          const double scale = static_cast<double>(self.grad[0]) / static_cast<double>(count);
                          Tensor<T> dL(probs.shape());
                          for (Index b = 0; b < B; ++b) {
                            for (Index p = 0; p < P; ++p) {
                              const std::uint8_t y = labs[static_cast<std::size_t>(b * P + p)];
                              if (y == ignore) continue;
                              const T w = static_cast<T>(weights[y] * scale);
                              for (Index k = 0; k < K; ++k) {
                                const Index i = (b * K + k) * P + p;
                                dL[i] = w * (probs[i] - (k == y ? T{1} : T{0}));
                              }
                            }
                          }
                          accumulate(*self.parents[0], dL);
                        });
}

template <typename T>
Var<T> dot_with(const Var<T>& x, const Tensor<T>& r) {
  require(x->value.shape() == r.shape(), "dot_with: shape mismatch");
  double s = 0;
  for (Index i = 0; i < r.numel(); ++i) s += static_cast<double>(x->value[i]) * static_cast<double>(r[i]);
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s)), {x}, [r](Node<T>& self) {
    Tensor<T> d(r.shape());
    const T g = self.grad[0];
    for (Index i = 0; i < r.numel(); ++i) d[i] = g * r[i];
    accumulate(*self.parents[0], d);
  });
}

#define SONARSEG_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                             \
  template Var<T> depthwise_conv3x3(const Var<T>&, const Var<T>&, int);                                      \
  template Var<T> pointwise(const Var<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                       \
  template Var<T> group_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                           \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                           \
  template Var<T> hardswish(const Var<T>&);                                                                  \
  template Var<T> gelu(const Var<T>&);                                                                       \
  template Var<T> avg_pool2(const Var<T>&);                                                                  \
  template Var<T> upsample_bilinear(const Var<T>&, Index, Index);                                            \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                               \
  template Var<T> to_tokens(const Var<T>&);                                                                  \
  template Var<T> from_tokens(const Var<T>&, Index, Index);                                                  \
  template Var<T> simxca_core(const Var<T>&, int, double);                                                   \
  template Var<T> weighted_cross_entropy(const Var<T>&, std::span<const std::uint8_t>,                       \
                                         std::span<const double>, std::uint8_t);                             \
  template Var<T> dot_with(const Var<T>&, const Tensor<T>&);

SONARSEG_INSTANTIATE_OPS(float)
SONARSEG_INSTANTIATE_OPS(double)

#undef SONARSEG_INSTANTIATE_OPS

}  // namespace sonarseg::ops
