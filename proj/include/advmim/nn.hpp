// Small layer library with explicit forward/backward passes. No autograd
// graph; every composite model wires its own backward in reverse order.
// Layouts: token sequences are (N, d) row-major, conv feature maps are CHW.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "advmim/tensor.hpp"

namespace advmim::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> w;  // value
  Tensor<T> g;  // gradient accumulator
  Tensor<T> m;  // momentum buffer
  bool decay = true;

  void init_shape(std::vector<int> s) {
    w = Tensor<T>(s);
    g = Tensor<T>(s);
    m = Tensor<T>(std::move(s));
  }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

// ---------------------------------------------------------------------------
// activations

template <typename T>
inline void relu_forward(Tensor<T>& x) {
  for (auto& v : x.v) v = v > T(0) ? v : T(0);
}

template <typename T>
inline void relu_backward(const Tensor<T>& pre, Tensor<T>& d) {
  for (std::size_t i = 0; i < d.v.size(); ++i)
    if (pre.v[i] <= T(0)) d.v[i] = T(0);
}

template <typename T>
inline void lrelu_forward(Tensor<T>& x, T slope) {
  for (auto& v : x.v) v = v > T(0) ? v : slope * v;
}

template <typename T>
inline void lrelu_backward(const Tensor<T>& pre, Tensor<T>& d, T slope) {
  for (std::size_t i = 0; i < d.v.size(); ++i)
    if (pre.v[i] <= T(0)) d.v[i] *= slope;
}

// exact GELU via erf
template <typename T>
inline T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
inline T gelu_grad(T x) {
  T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return cdf + x * pdf;
}

// ---------------------------------------------------------------------------
// linear

template <typename T>
struct Linear {
  int in = 0, out = 0;
  Param<T> w, b;

  void init(const std::string& name, int in_, int out_, Rng& rng, double std_dev) {
    in = in_;
    out = out_;
    w.name = name + ".w";
    w.init_shape({in, out});
    b.name = name + ".b";
    b.init_shape({out});
    b.decay = false;
    if (std_dev > 0)
      for (auto& v : w.w.v) v = static_cast<T>(rng.truncated_normal(std_dev));
  }

  void params(ParamList<T>& out_list) {
    out_list.push_back(&w);
    out_list.push_back(&b);
  }

  // X: (n, in) -> (n, out)
  Tensor<T> forward(const Tensor<T>& x) const {
    int n = x.dim(0);
    Tensor<T> y({n, out});
    y.mat(n, out).noalias() = x.mat(n, in) * w.w.mat(in, out);
    y.mat(n, out).rowwise() += ConstMatMap<T>(b.w.data(), 1, out).row(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    int n = x.dim(0);
    w.g.mat(in, out).noalias() += x.mat(n, in).transpose() * dy.mat(n, out);
    MatMap<T>(b.g.data(), 1, out).row(0) += dy.mat(n, out).colwise().sum();
    Tensor<T> dx({n, in});
    dx.mat(n, in).noalias() = dy.mat(n, out) * w.w.mat(in, out).transpose();
    return dx;
  }
};

// ---------------------------------------------------------------------------
// layer norm over last dim of (n, d)

template <typename T>
struct LayerNorm {
  int d = 0;
  Param<T> gamma, beta;
  static constexpr T kEps = T(1e-5);

  void init(const std::string& name, int d_) {
    d = d_;
    gamma.name = name + ".gamma";
    gamma.init_shape({d});
    gamma.decay = false;
    for (auto& v : gamma.w.v) v = T(1);
    beta.name = name + ".beta";
    beta.init_shape({d});
    beta.decay = false;
  }

  void params(ParamList<T>& out_list) {
    out_list.push_back(&gamma);
    out_list.push_back(&beta);
  }

  struct Cache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
  };

  Tensor<T> forward(const Tensor<T>& x, Cache& c) const {
    int n = x.dim(0);
    Tensor<T> y({n, d});
    c.xhat = Tensor<T>({n, d});
    c.inv_std.assign(static_cast<std::size_t>(n), T(0));
    for (int i = 0; i < n; ++i) {
      const T* xi = x.data() + static_cast<std::size_t>(i) * d;
      T mean = 0;
      for (int j = 0; j < d; ++j) mean += xi[j];
      mean /= T(d);
      T var = 0;
      for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
      var /= T(d);
      T inv = T(1) / std::sqrt(var + kEps);
      c.inv_std[static_cast<std::size_t>(i)] = inv;
      T* xh = c.xhat.data() + static_cast<std::size_t>(i) * d;
      T* yi = y.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) {
        xh[j] = (xi[j] - mean) * inv;
        yi[j] = xh[j] * gamma.w[static_cast<std::size_t>(j)] + beta.w[static_cast<std::size_t>(j)];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& c) {
    int n = dy.dim(0);
    Tensor<T> dx({n, d});
    for (int i = 0; i < n; ++i) {
      const T* dyi = dy.data() + static_cast<std::size_t>(i) * d;
      const T* xh = c.xhat.data() + static_cast<std::size_t>(i) * d;
      T inv = c.inv_std[static_cast<std::size_t>(i)];
      T sum_dg = 0, sum_dgx = 0;
      for (int j = 0; j < d; ++j) {
        T dg = dyi[j] * gamma.w[static_cast<std::size_t>(j)];
        sum_dg += dg;
        sum_dgx += dg * xh[j];
        gamma.g[static_cast<std::size_t>(j)] += dyi[j] * xh[j];
        beta.g[static_cast<std::size_t>(j)] += dyi[j];
      }
      T* dxi = dx.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) {
        T dg = dyi[j] * gamma.w[static_cast<std::size_t>(j)];
        dxi[j] = inv * (dg - sum_dg / T(d) - xh[j] * sum_dgx / T(d));
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// instance norm over the spatial extent of each channel of a CHW map

template <typename T>
struct InstanceNorm2d {
  int ch = 0;
  Param<T> gamma, beta;
  static constexpr T kEps = T(1e-5);

  void init(const std::string& name, int ch_) {
    ch = ch_;
    gamma.name = name + ".gamma";
    gamma.init_shape({ch});
    gamma.decay = false;
    for (auto& v : gamma.w.v) v = T(1);
    beta.name = name + ".beta";
    beta.init_shape({ch});
    beta.decay = false;
  }

  void params(ParamList<T>& out_list) {
    out_list.push_back(&gamma);
    out_list.push_back(&beta);
  }

  struct Cache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
  };

  Tensor<T> forward(const Tensor<T>& x, Cache& c) const {
    int cc = x.dim(0), h = x.dim(1), w = x.dim(2);
    int n = h * w;
    Tensor<T> y({cc, h, w});
    c.xhat = Tensor<T>({cc, h, w});
    c.inv_std.assign(static_cast<std::size_t>(cc), T(0));
    for (int k = 0; k < cc; ++k) {
      const T* xk = x.data() + static_cast<std::size_t>(k) * n;
      T mean = 0;
      for (int j = 0; j < n; ++j) mean += xk[j];
      mean /= T(n);
      T var = 0;
      for (int j = 0; j < n; ++j) var += (xk[j] - mean) * (xk[j] - mean);
      var /= T(n);
      T inv = T(1) / std::sqrt(var + kEps);
      c.inv_std[static_cast<std::size_t>(k)] = inv;
      T* xh = c.xhat.data() + static_cast<std::size_t>(k) * n;
      T* yk = y.data() + static_cast<std::size_t>(k) * n;
      T g = gamma.w[static_cast<std::size_t>(k)], b = beta.w[static_cast<std::size_t>(k)];
      for (int j = 0; j < n; ++j) {
        xh[j] = (xk[j] - mean) * inv;
        yk[j] = xh[j] * g + b;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& c) {
    int cc = dy.dim(0), h = dy.dim(1), w = dy.dim(2);
    int n = h * w;
    Tensor<T> dx({cc, h, w});
    for (int k = 0; k < cc; ++k) {
      const T* dyk = dy.data() + static_cast<std::size_t>(k) * n;
      const T* xh = c.xhat.data() + static_cast<std::size_t>(k) * n;
      T inv = c.inv_std[static_cast<std::size_t>(k)];
      T g = gamma.w[static_cast<std::size_t>(k)];
      T sum_dg = 0, sum_dgx = 0, sum_dy = 0, sum_dyx = 0;
      for (int j = 0; j < n; ++j) {
        T dg = dyk[j] * g;
        sum_dg += dg;
        sum_dgx += dg * xh[j];
        sum_dy += dyk[j];
        sum_dyx += dyk[j] * xh[j];
      }
      gamma.g[static_cast<std::size_t>(k)] += sum_dyx;
      beta.g[static_cast<std::size_t>(k)] += sum_dy;
      T* dxk = dx.data() + static_cast<std::size_t>(k) * n;
      for (int j = 0; j < n; ++j) {
        T dg = dyk[j] * g;
        dxk[j] = inv * (dg - sum_dg / T(n) - xh[j] * sum_dgx / T(n));
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// softmax over rows of (n, d)

template <typename T>
inline Tensor<T> softmax_rows(const Tensor<T>& x) {
  int n = x.dim(0), d = x.dim(1);
  Tensor<T> y({n, d});
  for (int i = 0; i < n; ++i) {
    const T* xi = x.data() + static_cast<std::size_t>(i) * d;
    T* yi = y.data() + static_cast<std::size_t>(i) * d;
    T mx = xi[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, xi[j]);
    T sum = 0;
    for (int j = 0; j < d; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (int j = 0; j < d; ++j) yi[j] /= sum;
  }
  return y;
}

// dL/dx given probabilities p = softmax(x) and dL/dp, both (n, d)
template <typename T>
inline Tensor<T> softmax_rows_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  int n = p.dim(0), d = p.dim(1);
  Tensor<T> dx({n, d});
  for (int i = 0; i < n; ++i) {
    const T* pi = p.data() + static_cast<std::size_t>(i) * d;
    const T* dpi = dp.data() + static_cast<std::size_t>(i) * d;
    T dot = 0;
    for (int j = 0; j < d; ++j) dot += pi[j] * dpi[j];
    T* dxi = dx.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) dxi[j] = pi[j] * (dpi[j] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// conv2d on CHW maps, im2col + GEMM

template <typename T>
struct Conv2d {
  int in_c = 0, out_c = 0, k = 0, stride = 1, pad = 0;
  Param<T> w;  // (out_c, in_c*k*k)
  Param<T> b;  // (out_c)

  void init(const std::string& name, int in_c_, int out_c_, int k_, int stride_, int pad_,
            Rng& rng, bool zero_init = false) {
    in_c = in_c_;
    out_c = out_c_;
    k = k_;
    stride = stride_;
    pad = pad_;
    w.name = name + ".w";
    w.init_shape({out_c, in_c * k * k});
    b.name = name + ".b";
    b.init_shape({out_c});
    b.decay = false;
    if (!zero_init) {
      // Kaiming fan-in
      double std_dev = std::sqrt(2.0 / (in_c * k * k));
      for (auto& v : w.w.v) v = static_cast<T>(rng.normal() * std_dev);
    }
  }

  void params(ParamList<T>& out_list) {
    out_list.push_back(&w);
    out_list.push_back(&b);
  }

  int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }
  int out_w(int wd) const { return (wd + 2 * pad - k) / stride + 1; }

  struct Cache {
    Tensor<T> col;  // (in_c*k*k, oh*ow)
    int h = 0, wd = 0;
  };

  void im2col(const Tensor<T>& x, int h, int wd, Tensor<T>& col) const {
    int oh = out_h(h), ow = out_w(wd);
    col = Tensor<T>({in_c * k * k, oh * ow});
    for (int c = 0; c < in_c; ++c) {
      const T* xc = x.data() + static_cast<std::size_t>(c) * h * wd;
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          T* row = col.data() + static_cast<std::size_t>((c * k + ki) * k + kj) * oh * ow;
          for (int oi = 0; oi < oh; ++oi) {
            int ii = oi * stride + ki - pad;
            if (ii < 0 || ii >= h) {
              for (int oj = 0; oj < ow; ++oj) row[oi * ow + oj] = T(0);
              continue;
            }
            const T* xr = xc + static_cast<std::size_t>(ii) * wd;
            for (int oj = 0; oj < ow; ++oj) {
              int jj = oj * stride + kj - pad;
              row[oi * ow + oj] = (jj >= 0 && jj < wd) ? xr[jj] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const Tensor<T>& col, int h, int wd, Tensor<T>& x) const {
    int oh = out_h(h), ow = out_w(wd);
    x = Tensor<T>({in_c, h, wd});
    for (int c = 0; c < in_c; ++c) {
      T* xc = x.data() + static_cast<std::size_t>(c) * h * wd;
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          const T* row = col.data() + static_cast<std::size_t>((c * k + ki) * k + kj) * oh * ow;
          for (int oi = 0; oi < oh; ++oi) {
            int ii = oi * stride + ki - pad;
            if (ii < 0 || ii >= h) continue;
            T* xr = xc + static_cast<std::size_t>(ii) * wd;
            for (int oj = 0; oj < ow; ++oj) {
              int jj = oj * stride + kj - pad;
              if (jj >= 0 && jj < wd) xr[jj] += row[oi * ow + oj];
            }
          }
        }
      }
    }
  }

  // x: (in_c, h, w) -> (out_c, oh, ow)
  Tensor<T> forward(const Tensor<T>& x, Cache& c) const {
    int h = x.dim(1), wd = x.dim(2);
    c.h = h;
    c.wd = wd;
    im2col(x, h, wd, c.col);
    int oh = out_h(h), ow = out_w(wd);
    int kk = in_c * k * k;
    Tensor<T> y({out_c, oh, ow});
    y.mat(out_c, oh * ow).noalias() = w.w.mat(out_c, kk) * c.col.mat(kk, oh * ow);
    for (int oc = 0; oc < out_c; ++oc) {
      T bias = b.w[static_cast<std::size_t>(oc)];
      T* yc = y.data() + static_cast<std::size_t>(oc) * oh * ow;
      for (int i = 0; i < oh * ow; ++i) yc[i] += bias;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& c) {
    int oh = out_h(c.h), ow = out_w(c.wd);
    int kk = in_c * k * k;
    w.g.mat(out_c, kk).noalias() += dy.mat(out_c, oh * ow) * c.col.mat(kk, oh * ow).transpose();
    for (int oc = 0; oc < out_c; ++oc) {
      const T* dyc = dy.data() + static_cast<std::size_t>(oc) * oh * ow;
      T s = 0;
      for (int i = 0; i < oh * ow; ++i) s += dyc[i];
      b.g[static_cast<std::size_t>(oc)] += s;
    }
    Tensor<T> dcol({kk, oh * ow});
    dcol.mat(kk, oh * ow).noalias() = w.w.mat(out_c, kk).transpose() * dy.mat(out_c, oh * ow);
    Tensor<T> dx;
    col2im(dcol, c.h, c.wd, dx);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// 2x2 max pool / nearest upsample on CHW maps

template <typename T>
struct MaxPool2 {
  struct Cache {
    std::vector<int> argmax;
    int c = 0, h = 0, wd = 0;
  };

  Tensor<T> forward(const Tensor<T>& x, Cache& cc) const {
    int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int oh = h / 2, ow = wd / 2;
    cc.c = c;
    cc.h = h;
    cc.wd = wd;
    cc.argmax.assign(static_cast<std::size_t>(c) * oh * ow, 0);
    Tensor<T> y({c, oh, ow});
    for (int ch = 0; ch < c; ++ch) {
      const T* xc = x.data() + static_cast<std::size_t>(ch) * h * wd;
      T* yc = y.data() + static_cast<std::size_t>(ch) * oh * ow;
      int* am = cc.argmax.data() + static_cast<std::size_t>(ch) * oh * ow;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          int base = (2 * i) * wd + 2 * j;
          int best = base;
          T bv = xc[base];
          const int cand[3] = {base + 1, base + wd, base + wd + 1};
          for (int idx : cand)
            if (xc[idx] > bv) {
              bv = xc[idx];
              best = idx;
            }
          yc[i * ow + j] = bv;
          am[i * ow + j] = best;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& cc) const {
    int oh = cc.h / 2, ow = cc.wd / 2;
    Tensor<T> dx({cc.c, cc.h, cc.wd});
    for (int ch = 0; ch < cc.c; ++ch) {
      const T* dyc = dy.data() + static_cast<std::size_t>(ch) * oh * ow;
      const int* am = cc.argmax.data() + static_cast<std::size_t>(ch) * oh * ow;
      T* dxc = dx.data() + static_cast<std::size_t>(ch) * cc.h * cc.wd;
      for (int i = 0; i < oh * ow; ++i) dxc[am[i]] += dyc[i];
    }
    return dx;
  }
};

template <typename T>
inline Tensor<T> upsample2_forward(const Tensor<T>& x) {
  int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  Tensor<T> y({c, 2 * h, 2 * wd});
  for (int ch = 0; ch < c; ++ch) {
    const T* xc = x.data() + static_cast<std::size_t>(ch) * h * wd;
    T* yc = y.data() + static_cast<std::size_t>(ch) * 4 * h * wd;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j) {
        T v = xc[i * wd + j];
        yc[(2 * i) * 2 * wd + 2 * j] = v;
        yc[(2 * i) * 2 * wd + 2 * j + 1] = v;
        yc[(2 * i + 1) * 2 * wd + 2 * j] = v;
        yc[(2 * i + 1) * 2 * wd + 2 * j + 1] = v;
      }
  }
  return y;
}

template <typename T>
inline Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  int c = dy.dim(0), h2 = dy.dim(1), w2 = dy.dim(2);
  int h = h2 / 2, wd = w2 / 2;
  Tensor<T> dx({c, h, wd});
  for (int ch = 0; ch < c; ++ch) {
    const T* dyc = dy.data() + static_cast<std::size_t>(ch) * h2 * w2;
    T* dxc = dx.data() + static_cast<std::size_t>(ch) * h * wd;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j)
        dxc[i * wd + j] = dyc[(2 * i) * w2 + 2 * j] + dyc[(2 * i) * w2 + 2 * j + 1] +
                          dyc[(2 * i + 1) * w2 + 2 * j] + dyc[(2 * i + 1) * w2 + 2 * j + 1];
  }
  return dx;
}

}  // namespace advmim::nn
