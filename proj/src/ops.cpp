#include "aclseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aclseg/parallel.hpp"

namespace aclseg::ops {

AxisGeometry conv_axis(int in, int kernel, const ConvSpec& spec) {
  if (spec.stride < 1) throw ArgumentError("conv2d stride must be >= 1");
  if (spec.dilation < 1) throw ArgumentError("conv2d dilation must be >= 1");
  if (kernel < 1) throw ArgumentError("conv2d kernel extent must be >= 1");
  const int span = (kernel - 1) * spec.dilation + 1;
  AxisGeometry g;
  if (spec.padding == Padding::Same) {
    g.out = (in + spec.stride - 1) / spec.stride;
    const int total = std::max((g.out - 1) * spec.stride + span - in, 0);
    g.pad_before = total / 2;
  } else {
    if (in < span) throw ShapeError("valid conv2d: input smaller than dilated kernel");
    g.out = (in - span) / spec.stride + 1;
    g.pad_before = 0;
  }
  return g;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

struct ConvGeometry {
  AxisGeometry row;
  AxisGeometry col;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec) {
  // w is kh x kw x Cin x Cout
  require(x.c() == w.w(), "conv2d channel mismatch: input has " + std::to_string(x.c()) +
                              " channels, kernel expects " + std::to_string(w.w()));
  return {conv_axis(x.h(), w.n(), spec), conv_axis(x.w(), w.h(), spec)};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvSpec& spec) {
  const auto g = conv_geometry(x, w, spec);
  const int kh = w.n(), kw = w.h(), cin = w.w(), cout = w.c();
  if (bias) require(bias->size() == static_cast<std::size_t>(cout), "conv2d bias size mismatch");

  Tensor<T> y(Shape{x.n(), g.row.out, g.col.out, cout});
  const int rows = x.n() * g.row.out;
  parallel_for(0, rows, [&](int lo, int hi) {
    std::vector<T> acc(cout);
    for (int r = lo; r < hi; ++r) {
      const int n = r / g.row.out;
      const int oi = r % g.row.out;
      for (int oj = 0; oj < g.col.out; ++oj) {
        std::fill(acc.begin(), acc.end(), T(0));
        T* a = acc.data();
        for (int di = 0; di < kh; ++di) {
          const int ii = oi * spec.stride + di * spec.dilation - g.row.pad_before;
          if (ii < 0 || ii >= x.h()) continue;
          for (int dj = 0; dj < kw; ++dj) {
            const int jj = oj * spec.stride + dj * spec.dilation - g.col.pad_before;
            if (jj < 0 || jj >= x.w()) continue;
            const T* xp = x.ptr() + x.offset(n, ii, jj, 0);
            const T* wp = w.ptr() + w.offset(di, dj, 0, 0);
            for (int ci = 0; ci < cin; ++ci) {
              const T xv = xp[ci];
              const T* wr = wp + static_cast<std::size_t>(ci) * cout;
              for (int co = 0; co < cout; ++co) a[co] += xv * wr[co];
            }
          }
        }
        T* yp = y.ptr() + y.offset(n, oi, oj, 0);
        if (bias) {
          const T* b = bias->ptr();
          for (int co = 0; co < cout; ++co) yp[co] = a[co] + b[co];
        } else {
          std::copy(acc.begin(), acc.end(), yp);
        }
      }
    }
  });
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                     const ConvSpec& spec, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const auto g = conv_geometry(x, w, spec);
  const int kh = w.n(), kw = w.h(), cin = w.w(), cout = w.c();
  require(gy.shape() == (Shape{x.n(), g.row.out, g.col.out, cout}),
          "conv2d_backward: gradient shape mismatch");
  if (gx) require(gx->shape() == x.shape(), "conv2d_backward: gx shape mismatch");
  if (gw) require(gw->shape() == w.shape(), "conv2d_backward: gw shape mismatch");

  if (gb) {
    T* b = gb->ptr();
    for (std::size_t i = 0; i < gy.size(); i += cout)
      for (int co = 0; co < cout; ++co) b[co] += gy[i + co];
  }

  // Input gradient: partitioned by batch item so workers touch disjoint rows of gx.
  if (gx) {
    parallel_for(0, x.n(), [&](int lo, int hi) {
      for (int n = lo; n < hi; ++n)
        for (int oi = 0; oi < g.row.out; ++oi)
          for (int oj = 0; oj < g.col.out; ++oj) {
            const T* gyp = gy.ptr() + gy.offset(n, oi, oj, 0);
            for (int di = 0; di < kh; ++di) {
              const int ii = oi * spec.stride + di * spec.dilation - g.row.pad_before;
              if (ii < 0 || ii >= x.h()) continue;
              for (int dj = 0; dj < kw; ++dj) {
                const int jj = oj * spec.stride + dj * spec.dilation - g.col.pad_before;
                if (jj < 0 || jj >= x.w()) continue;
                T* gxp = gx->ptr() + x.offset(n, ii, jj, 0);
                const T* wp = w.ptr() + w.offset(di, dj, 0, 0);
                for (int ci = 0; ci < cin; ++ci) {
                  const T* wr = wp + static_cast<std::size_t>(ci) * cout;
                  T s = 0;
                  for (int co = 0; co < cout; ++co) s += wr[co] * gyp[co];
                  gxp[ci] += s;
                }
              }
            }
          }
    });
  }

  // Kernel gradient: partitioned by kernel tap.
  if (gw) {
    parallel_for(0, kh * kw, [&](int lo, int hi) {
      for (int tap = lo; tap < hi; ++tap) {
        const int di = tap / kw, dj = tap % kw;
        T* gwp = gw->ptr() + w.offset(di, dj, 0, 0);
        for (int n = 0; n < x.n(); ++n)
          for (int oi = 0; oi < g.row.out; ++oi) {
            const int ii = oi * spec.stride + di * spec.dilation - g.row.pad_before;
            if (ii < 0 || ii >= x.h()) continue;
            for (int oj = 0; oj < g.col.out; ++oj) {
              const int jj = oj * spec.stride + dj * spec.dilation - g.col.pad_before;
              if (jj < 0 || jj >= x.w()) continue;
              const T* xp = x.ptr() + x.offset(n, ii, jj, 0);
              const T* gyp = gy.ptr() + gy.offset(n, oi, oj, 0);
              for (int ci = 0; ci < cin; ++ci) {
                const T xv = xp[ci];
                T* gr = gwp + static_cast<std::size_t>(ci) * cout;
                for (int co = 0; co < cout; ++co) gr[co] += xv * gyp[co];
              }
            }
          }
      }
    });
  }
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var,
                     const BatchNormOptions& opt, NormMode mode, BatchNormCache<T>* cache) {
  const int C = x.c();
  const auto cs = static_cast<std::size_t>(C);
  require(gamma.size() == cs && beta.size() == cs && running_mean.size() == cs &&
              running_var.size() == cs,
          "batch_norm channel mismatch: input has " + std::to_string(C) + " channels");
  if (!(opt.eps > 0)) throw ArgumentError("batch_norm eps must be > 0");

  const std::size_t count = x.size() / cs;
  std::vector<T> mean(cs, T(0)), inv_std(cs, T(0));
  if (mode == NormMode::Train) {
    std::vector<T> var(cs, T(0));
    for (std::size_t i = 0; i < x.size(); i += cs)
      for (std::size_t c = 0; c < cs; ++c) mean[c] += x[i + c];
    for (auto& m : mean) m /= static_cast<T>(count);
    for (std::size_t i = 0; i < x.size(); i += cs)
      for (std::size_t c = 0; c < cs; ++c) {
        const T d = x[i + c] - mean[c];
        var[c] += d * d;
      }
    const T mom = static_cast<T>(opt.momentum);
    for (std::size_t c = 0; c < cs; ++c) {
      var[c] /= static_cast<T>(count);
      inv_std[c] = T(1) / std::sqrt(var[c] + static_cast<T>(opt.eps));
      running_mean[c] = mom * running_mean[c] + (T(1) - mom) * mean[c];
      running_var[c] = mom * running_var[c] + (T(1) - mom) * var[c];
    }
  } else {
    for (std::size_t c = 0; c < cs; ++c) {
      if (!std::isfinite(running_mean[c]) || !std::isfinite(running_var[c]) ||
          running_var[c] < 0)
        throw ArgumentError("batch_norm infer mode requires finite running stats with var >= 0");
      mean[c] = running_mean[c];
      inv_std[c] = T(1) / std::sqrt(running_var[c] + static_cast<T>(opt.eps));
    }
  }

  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  for (std::size_t i = 0; i < x.size(); i += cs)
    for (std::size_t c = 0; c < cs; ++c) {
      const T h = (x[i + c] - mean[c]) * inv_std[c];
      xhat[i + c] = h;
      y[i + c] = gamma[c] * h + beta[c];
    }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->xhat = std::move(xhat);
  }
  return y;
}

template <typename T>
void batch_norm_backward(const Tensor<T>& gy, const Tensor<T>& gamma,
                         const BatchNormCache<T>& cache, NormMode mode, Tensor<T>* gx,
                         Tensor<T>* ggamma, Tensor<T>* gbeta) {
  const std::size_t cs = static_cast<std::size_t>(gy.c());
  const std::size_t count = gy.size() / cs;
  const Tensor<T>& xhat = cache.xhat;
  std::vector<T> sum_gy(cs, T(0)), sum_gy_xhat(cs, T(0));
  for (std::size_t i = 0; i < gy.size(); i += cs)
    for (std::size_t c = 0; c < cs; ++c) {
      sum_gy[c] += gy[i + c];
      sum_gy_xhat[c] += gy[i + c] * xhat[i + c];
    }
  if (ggamma)
    for (std::size_t c = 0; c < cs; ++c) (*ggamma)[c] += sum_gy_xhat[c];
  if (gbeta)
    for (std::size_t c = 0; c < cs; ++c) (*gbeta)[c] += sum_gy[c];
  if (!gx) return;
  if (mode == NormMode::Train) {
    const T m = static_cast<T>(count);
    for (std::size_t i = 0; i < gy.size(); i += cs)
      for (std::size_t c = 0; c < cs; ++c)
        (*gx)[i + c] += gamma[c] * cache.inv_std[c] / m *
                        (m * gy[i + c] - sum_gy[c] - xhat[i + c] * sum_gy_xhat[c]);
  } else {
    for (std::size_t i = 0; i < gy.size(); i += cs)
      for (std::size_t c = 0; c < cs; ++c) (*gx)[i + c] += gy[i + c] * gamma[c] * cache.inv_std[c];
  }
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  Tensor<T> y(x.shape());
  if (kind == Activation::Relu) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  } else {
    // Branch on sign so exp never sees a large positive argument.
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T v = x[i];
      if (v >= T(0)) {
        y[i] = T(1) / (T(1) + std::exp(-v));
      } else {
        const T e = std::exp(v);
        y[i] = e / (T(1) + e);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& y, const Tensor<T>& gy, Activation kind) {
  require(y.shape() == gy.shape(), "activation_backward: shape mismatch");
  Tensor<T> gx(y.shape());
  if (kind == Activation::Relu) {
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = y[i] > T(0) ? gy[i] : T(0);
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * y[i] * (T(1) - y[i]);
  }
  return gx;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  const std::size_t cs = static_cast<std::size_t>(x.c());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); i += cs) {
    T mx = x[i];
    for (std::size_t c = 1; c < cs; ++c) mx = std::max(mx, x[i + c]);
    T sum = 0;
    for (std::size_t c = 0; c < cs; ++c) {
      y[i + c] = std::exp(x[i + c] - mx);
      sum += y[i + c];
    }
    for (std::size_t c = 0; c < cs; ++c) y[i + c] /= sum;
  }
  return y;
}

template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& gy) {
  require(y.shape() == gy.shape(), "softmax_channels_backward: shape mismatch");
  const std::size_t cs = static_cast<std::size_t>(y.c());
  Tensor<T> gx(y.shape());
  for (std::size_t i = 0; i < y.size(); i += cs) {
    T dot = 0;
    for (std::size_t c = 0; c < cs; ++c) dot += gy[i + c] * y[i + c];
    for (std::size_t c = 0; c < cs; ++c) gx[i + c] = y[i + c] * (gy[i + c] - dot);
  }
  return gx;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  Tensor<T> y(Shape{x.n(), 1, 1, x.c()});
  const T inv = T(1) / static_cast<T>(x.h() * x.w());
  for (int n = 0; n < x.n(); ++n) {
    T* yp = y.ptr() + y.offset(n, 0, 0, 0);
    for (int i = 0; i < x.h(); ++i)
      for (int j = 0; j < x.w(); ++j) {
        const T* xp = x.ptr() + x.offset(n, i, j, 0);
        for (int c = 0; c < x.c(); ++c) yp[c] += xp[c];
      }
    for (int c = 0; c < x.c(); ++c) yp[c] *= inv;
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& x_shape, const Tensor<T>& gy) {
  Tensor<T> gx(x_shape);
  const T inv = T(1) / static_cast<T>(x_shape.h * x_shape.w);
  for (int n = 0; n < x_shape.n; ++n)
    for (int i = 0; i < x_shape.h; ++i)
      for (int j = 0; j < x_shape.w; ++j)
        for (int c = 0; c < x_shape.c; ++c) gx.at(n, i, j, c) = gy.at(n, 0, 0, c) * inv;
  return gx;
}

namespace {

// Half-pixel-centre source coordinate, clamped to the valid range.
struct Tap {
  int lo = 0;
  int hi = 0;
  double frac = 0;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    taps[d] = {lo, std::min(lo + 1, in - 1), src - lo};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ArgumentError("bilinear_resize target must be >= 1");
  if (out_h == x.h() && out_w == x.w()) return x;
  const auto rt = bilinear_taps(x.h(), out_h);
  const auto ct = bilinear_taps(x.w(), out_w);
  Tensor<T> y(Shape{x.n(), out_h, out_w, x.c()});
  const int C = x.c();
  for (int n = 0; n < x.n(); ++n)
    for (int i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(rt[i].frac);
      for (int j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(ct[j].frac);
        const T* p00 = x.ptr() + x.offset(n, rt[i].lo, ct[j].lo, 0);
        const T* p01 = x.ptr() + x.offset(n, rt[i].lo, ct[j].hi, 0);
        const T* p10 = x.ptr() + x.offset(n, rt[i].hi, ct[j].lo, 0);
        const T* p11 = x.ptr() + x.offset(n, rt[i].hi, ct[j].hi, 0);
        T* yp = y.ptr() + y.offset(n, i, j, 0);
        for (int c = 0; c < C; ++c) {
          const T top = p00[c] + (p01[c] - p00[c]) * fx;
          const T bot = p10[c] + (p11[c] - p10[c]) * fx;
          yp[c] = top + (bot - top) * fy;
        }
      }
    }
  return y;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Shape& x_shape, const Tensor<T>& gy) {
  if (gy.h() == x_shape.h && gy.w() == x_shape.w) return gy;
  const auto rt = bilinear_taps(x_shape.h, gy.h());
  const auto ct = bilinear_taps(x_shape.w, gy.w());
  Tensor<T> gx(x_shape);
  const int C = x_shape.c;
  for (int n = 0; n < gy.n(); ++n)
    for (int i = 0; i < gy.h(); ++i) {
      const T fy = static_cast<T>(rt[i].frac);
      for (int j = 0; j < gy.w(); ++j) {
        const T fx = static_cast<T>(ct[j].frac);
        const T w00 = (T(1) - fy) * (T(1) - fx), w01 = (T(1) - fy) * fx;
        const T w10 = fy * (T(1) - fx), w11 = fy * fx;
        const T* g = gy.ptr() + gy.offset(n, i, j, 0);
        T* p00 = gx.ptr() + gx.offset(n, rt[i].lo, ct[j].lo, 0);
        T* p01 = gx.ptr() + gx.offset(n, rt[i].lo, ct[j].hi, 0);
        T* p10 = gx.ptr() + gx.offset(n, rt[i].hi, ct[j].lo, 0);
        T* p11 = gx.ptr() + gx.offset(n, rt[i].hi, ct[j].hi, 0);
        for (int c = 0; c < C; ++c) {
          p00[c] += g[c] * w00;
          p01[c] += g[c] * w01;
          p10[c] += g[c] * w10;
          p11[c] += g[c] * w11;
        }
      }
    }
  return gx;
}

template <typename T>
Tensor<T> nearest_resize(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ArgumentError("nearest_resize target must be >= 1");
  Tensor<T> y(Shape{x.n(), out_h, out_w, x.c()});
  const double sy = static_cast<double>(x.h()) / out_h;
  const double sx = static_cast<double>(x.w()) / out_w;
  for (int n = 0; n < x.n(); ++n)
    for (int i = 0; i < out_h; ++i) {
      const int si = std::min(static_cast<int>(std::floor((i + 0.5) * sy)), x.h() - 1);
      for (int j = 0; j < out_w; ++j) {
        const int sj = std::min(static_cast<int>(std::floor((j + 0.5) * sx)), x.w() - 1);
        for (int c = 0; c < x.c(); ++c) y.at(n, i, j, c) = x.at(n, si, sj, c);
      }
    }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& xs) {
  if (xs.empty()) throw ArgumentError("concat_channels needs at least one tensor");
  const Shape& s0 = xs.front()->shape();
  int total = 0;
  for (const auto* t : xs) {
    require(t->n() == s0.n && t->h() == s0.h && t->w() == s0.w,
            "concat_channels spatial mismatch: " + t->shape().str() + " vs " + s0.str());
    total += t->c();
  }
  Tensor<T> y(Shape{s0.n, s0.h, s0.w, total});
  const std::size_t pixels = static_cast<std::size_t>(s0.n) * s0.h * s0.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    T* dst = y.ptr() + p * total;
    for (const auto* t : xs) {
      const T* src = t->ptr() + p * t->c();
      dst = std::copy(src, src + t->c(), dst);
    }
  }
  return y;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count) {
  if (begin < 0 || count < 1 || begin + count > x.c())
    throw ArgumentError("slice_channels range out of bounds");
  Tensor<T> y(Shape{x.n(), x.h(), x.w(), count});
  const std::size_t pixels = static_cast<std::size_t>(x.n()) * x.h() * x.w();
  for (std::size_t p = 0; p < pixels; ++p) {
    const T* src = x.ptr() + p * x.c() + begin;
    std::copy(src, src + count, y.ptr() + p * count);
  }
  return y;
}

namespace {

template <typename T>
bool is_channel_broadcast(const Tensor<T>& x, const Tensor<T>& y) {
  return y.n() == x.n() && y.h() == 1 && y.w() == 1 && y.c() == x.c() &&
         !(x.h() == 1 && x.w() == 1);
}

}  // namespace

template <typename T>
Tensor<T> elementwise(const Tensor<T>& x, const Tensor<T>& y, Binary kind) {
  const bool bcast = is_channel_broadcast(x, y);
  require(bcast || x.shape() == y.shape(),
          "elementwise shape mismatch: " + x.shape().str() + " vs " + y.shape().str());
  Tensor<T> z(x.shape());
  const std::size_t cs = static_cast<std::size_t>(x.c());
  const std::size_t per_item = static_cast<std::size_t>(x.h()) * x.w() * cs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T b = bcast ? y[(i / per_item) * cs + i % cs] : y[i];
    z[i] = kind == Binary::Add ? x[i] + b : x[i] * b;
  }
  return z;
}

template <typename T>
void elementwise_backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& gz,
                          Binary kind, Tensor<T>* gx, Tensor<T>* gy) {
  const bool bcast = is_channel_broadcast(x, y);
  const std::size_t cs = static_cast<std::size_t>(x.c());
  const std::size_t per_item = static_cast<std::size_t>(x.h()) * x.w() * cs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t yi = bcast ? (i / per_item) * cs + i % cs : i;
    if (kind == Binary::Add) {
      if (gx) (*gx)[i] += gz[i];
      if (gy) (*gy)[yi] += gz[i];
    } else {
      if (gx) (*gx)[i] += gz[i] * y[yi];
      if (gy) (*gy)[yi] += gz[i] * x[i];
    }
  }
}

#define ACLSEG_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,              \
                            const ConvSpec&);                                                  \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                const ConvSpec&, Tensor<T>*, Tensor<T>*, Tensor<T>*);          \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                Tensor<T>&, Tensor<T>&, const BatchNormOptions&, NormMode,     \
                                BatchNormCache<T>*);                                           \
  template void batch_norm_backward(const Tensor<T>&, const Tensor<T>&,                        \
                                    const BatchNormCache<T>&, NormMode, Tensor<T>*,            \
                                    Tensor<T>*, Tensor<T>*);                                   \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                 \
  template Tensor<T> activation_backward(const Tensor<T>&, const Tensor<T>&, Activation);      \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                       \
  template Tensor<T> softmax_channels_backward(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                        \
  template Tensor<T> global_avg_pool_backward(const Shape&, const Tensor<T>&);                 \
  template Tensor<T> bilinear_resize(const Tensor<T>&, int, int);                              \
  template Tensor<T> bilinear_resize_backward(const Shape&, const Tensor<T>&);                 \
  template Tensor<T> nearest_resize(const Tensor<T>&, int, int);                               \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                    \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                               \
  template Tensor<T> elementwise(const Tensor<T>&, const Tensor<T>&, Binary);                  \
  template void elementwise_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                     Binary, Tensor<T>*, Tensor<T>*);

ACLSEG_INSTANTIATE_OPS(float)
ACLSEG_INSTANTIATE_OPS(double)

}  // namespace aclseg::ops
