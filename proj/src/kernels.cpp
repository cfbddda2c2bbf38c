#include "vitforge/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef VITFORGE_OPENMP
#include <omp.h>
#endif

namespace vitforge::kernels {

namespace {

std::atomic<Backend> g_backend{
#ifdef VITFORGE_OPENMP
    Backend::openmp
#else
    Backend::serial
#endif
};

// Dispatches an index loop to OpenMP or a plain loop. Each index writes only
// its own outputs, so both paths compute bit-identical results.
template <class F>
void par_for(int64_t count, F&& body) {
#ifdef VITFORGE_OPENMP
  if (g_backend.load(std::memory_order_relaxed) == Backend::openmp) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < count; ++i) body(i);
    return;
  }
#endif
  for (int64_t i = 0; i < count; ++i) body(i);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

bool openmp_available() {
#ifdef VITFORGE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef VITFORGE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
#ifdef VITFORGE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  par_for(m, [&](int64_t i) {
    double* c = C + i * n;
    if (!acc) std::memset(c, 0, sizeof(double) * n);
    const double* a = A + i * k;
    for (int p = 0; p < k; ++p) {
      const double ap = a[p];
      const double* b = B + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += ap * b[j];
    }
  });
}

void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  par_for(m, [&](int64_t i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (int j = 0; j < n; ++j) {
      const double* b = B + static_cast<int64_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[p] * b[p];
      c[j] = acc ? c[j] + s : s;
    }
  });
}

void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  par_for(m, [&](int64_t i) {
    double* c = C + i * n;
    if (!acc) std::memset(c, 0, sizeof(double) * n);
    for (int p = 0; p < k; ++p) {
      const double ap = A[static_cast<int64_t>(p) * m + i];
      const double* b = B + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += ap * b[j];
    }
  });
}

void add_bias_rows(double* X, const double* b, int rows, int cols) {
  par_for(rows, [&](int64_t r) {
    double* x = X + r * cols;
    for (int c = 0; c < cols; ++c) x[c] += b[c];
  });
}

void col_sums_acc(const double* X, double* out, int rows, int cols) {
  par_for(cols, [&](int64_t c) {
    double s = 0.0;
    for (int r = 0; r < rows; ++r) s += X[static_cast<int64_t>(r) * cols + c];
    out[c] += s;
  });
}

void gelu(const double* x, double* y, int64_t n) {
  par_for(n, [&](int64_t i) {
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  });
}

void gelu_backward(const double* x, const double* dy, double* dx, int64_t n) {
  par_for(n, [&](int64_t i) {
    const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  });
}

void layernorm(const double* x, const double* gamma, const double* beta, double* y,
               double* mean, double* rstd, int rows, int dim, double eps) {
  par_for(rows, [&](int64_t r) {
    const double* xr = x + r * dim;
    double mu = 0.0;
    for (int c = 0; c < dim; ++c) mu += xr[c];
    mu /= dim;
    double var = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double d = xr[c] - mu;
      var += d * d;
    }
    var /= dim;
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    double* yr = y + r * dim;
    for (int c = 0; c < dim; ++c) yr[c] = gamma[c] * ((xr[c] - mu) * rs) + beta[c];
  });
}

void layernorm_backward(const double* x, const double* gamma, const double* mean,
                        const double* rstd, const double* dy, double* dx,
                        double* dgamma, double* dbeta, int rows, int dim) {
  par_for(dim, [&](int64_t c) {
    double dg = 0.0, db = 0.0;
    for (int r = 0; r < rows; ++r) {
      const int64_t i = static_cast<int64_t>(r) * dim + c;
      const double xhat = (x[i] - mean[r]) * rstd[r];
      dg += dy[i] * xhat;
      db += dy[i];
    }
    dgamma[c] += dg;
    dbeta[c] += db;
  });
  par_for(rows, [&](int64_t r) {
    const double* xr = x + r * dim;
    const double* dyr = dy + r * dim;
    double* dxr = dx + r * dim;
    const double mu = mean[r], rs = rstd[r];
    double s1 = 0.0, s2 = 0.0;  // mean(g), mean(g * xhat) with g = gamma .* dy
    for (int c = 0; c < dim; ++c) {
      const double g = gamma[c] * dyr[c];
      const double xhat = (xr[c] - mu) * rs;
      s1 += g;
      s2 += g * xhat;
    }
    s1 /= dim;
    s2 /= dim;
    for (int c = 0; c < dim; ++c) {
      const double g = gamma[c] * dyr[c];
      const double xhat = (xr[c] - mu) * rs;
      dxr[c] = rs * (g - s1 - xhat * s2);
    }
  });
}

void softmax_rows(double* x, int rows, int cols) {
  par_for(rows, [&](int64_t r) {
    double* xr = x + r * cols;
    double mx = xr[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      xr[c] = std::exp(xr[c] - mx);
      sum += xr[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) xr[c] *= inv;
  });
}

ConvGeom conv_geometry(int in_h, int in_w, int k, int stride, int dilation) {
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.k = k;
  g.stride = stride;
  g.dilation = dilation;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int ext = g.extent();
  const int pad_h = std::max((g.out_h - 1) * stride + ext - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + ext - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

void conv2d(const double* x, const double* w, const double* bias, double* y,
            int in_c, int out_c, const ConvGeom& g) {
  const int64_t in_hw = static_cast<int64_t>(g.in_h) * g.in_w;
  const int64_t out_hw = static_cast<int64_t>(g.out_h) * g.out_w;
  par_for(static_cast<int64_t>(out_c) * g.out_h, [&](int64_t idx) {
    const int oc = static_cast<int>(idx / g.out_h);
    const int oy = static_cast<int>(idx % g.out_h);
    const double* wc = w + static_cast<int64_t>(oc) * in_c * g.k * g.k;
    double* yrow = y + oc * out_hw + static_cast<int64_t>(oy) * g.out_w;
    for (int ox = 0; ox < g.out_w; ++ox) {
      double acc = bias ? bias[oc] : 0.0;
      for (int ic = 0; ic < in_c; ++ic) {
        const double* xc = x + ic * in_hw;
        const double* wk = wc + static_cast<int64_t>(ic) * g.k * g.k;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.stride - g.pad_left + kx * g.dilation;
            if (ix < 0 || ix >= g.in_w) continue;
            acc += xc[static_cast<int64_t>(iy) * g.in_w + ix] * wk[ky * g.k + kx];
          }
        }
      }
      yrow[ox] = acc;
    }
  });
}

void conv2d_backward_input(const double* w, const double* dy, double* dx,
                           int in_c, int out_c, const ConvGeom& g) {
  const int64_t in_hw = static_cast<int64_t>(g.in_h) * g.in_w;
  const int64_t out_hw = static_cast<int64_t>(g.out_h) * g.out_w;
  par_for(static_cast<int64_t>(in_c) * g.in_h, [&](int64_t idx) {
    const int ic = static_cast<int>(idx / g.in_h);
    const int iy = static_cast<int>(idx % g.in_h);
    double* dxrow = dx + ic * in_hw + static_cast<int64_t>(iy) * g.in_w;
    for (int ix = 0; ix < g.in_w; ++ix) {
      double acc = 0.0;
      for (int ky = 0; ky < g.k; ++ky) {
        const int ny = iy + g.pad_top - ky * g.dilation;
        if (ny < 0 || ny % g.stride != 0) continue;
        const int oy = ny / g.stride;
        if (oy >= g.out_h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          const int nx = ix + g.pad_left - kx * g.dilation;
          if (nx < 0 || nx % g.stride != 0) continue;
          const int ox = nx / g.stride;
          if (ox >= g.out_w) continue;
          for (int oc = 0; oc < out_c; ++oc) {
            acc += w[((static_cast<int64_t>(oc) * in_c + ic) * g.k + ky) * g.k + kx] *
                   dy[oc * out_hw + static_cast<int64_t>(oy) * g.out_w + ox];
          }
        }
      }
      dxrow[ix] = acc;
    }
  });
}

void conv2d_backward_params(const double* x, const double* dy, double* dw, double* db,
                            int in_c, int out_c, const ConvGeom& g) {
  const int64_t in_hw = static_cast<int64_t>(g.in_h) * g.in_w;
  const int64_t out_hw = static_cast<int64_t>(g.out_h) * g.out_w;
  par_for(out_c, [&](int64_t oc) {
    const double* dyc = dy + oc * out_hw;
    double bsum = 0.0;
    for (int64_t i = 0; i < out_hw; ++i) bsum += dyc[i];
    db[oc] += bsum;
    double* dwc = dw + oc * in_c * g.k * g.k;
    for (int ic = 0; ic < in_c; ++ic) {
      const double* xc = x + ic * in_hw;
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx) {
          double acc = 0.0;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad_left + kx * g.dilation;
              if (ix < 0 || ix >= g.in_w) continue;
              acc += xc[static_cast<int64_t>(iy) * g.in_w + ix] *
                     dyc[static_cast<int64_t>(oy) * g.out_w + ox];
            }
          }
          dwc[(static_cast<int64_t>(ic) * g.k + ky) * g.k + kx] += acc;
        }
      }
    }
  });
}

void attention_forward(const double* Q, const double* K, const double* V,
                       double* probs, double* out,
                       int nw, int n, int heads, int head_dim) {
  const int d = heads * head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  par_for(static_cast<int64_t>(nw) * heads, [&](int64_t idx) {
    const int w = static_cast<int>(idx / heads);
    const int h = static_cast<int>(idx % heads);
    const int64_t tok0 = static_cast<int64_t>(w) * n;
    const int64_t off = h * head_dim;
    double* P = probs + idx * n * n;
    for (int t = 0; t < n; ++t) {
      const double* q = Q + (tok0 + t) * d + off;
      double* prow = P + static_cast<int64_t>(t) * n;
      double mx = -1e300;
      for (int u = 0; u < n; ++u) {
        const double* kv = K + (tok0 + u) * d + off;
        double s = 0.0;
        for (int c = 0; c < head_dim; ++c) s += q[c] * kv[c];
        prow[u] = s * scale;
        mx = std::max(mx, prow[u]);
      }
      double sum = 0.0;
      for (int u = 0; u < n; ++u) {
        prow[u] = std::exp(prow[u] - mx);
        sum += prow[u];
      }
      const double inv = 1.0 / sum;
      for (int u = 0; u < n; ++u) prow[u] *= inv;
      double* o = out + (tok0 + t) * d + off;
      for (int c = 0; c < head_dim; ++c) o[c] = 0.0;
      for (int u = 0; u < n; ++u) {
        const double p = prow[u];
        const double* v = V + (tok0 + u) * d + off;
        for (int c = 0; c < head_dim; ++c) o[c] += p * v[c];
      }
    }
  });
}

void attention_backward(const double* Q, const double* K, const double* V,
                        const double* probs, const double* dout,
                        double* dQ, double* dK, double* dV,
                        int nw, int n, int heads, int head_dim) {
  const int d = heads * head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  par_for(static_cast<int64_t>(nw) * heads, [&](int64_t idx) {
    const int w = static_cast<int>(idx / heads);
    const int h = static_cast<int>(idx % heads);
    const int64_t tok0 = static_cast<int64_t>(w) * n;
    const int64_t off = h * head_dim;
    const double* P = probs + idx * n * n;
    std::vector<double> dZ(static_cast<size_t>(n) * n);
    for (int t = 0; t < n; ++t) {
      const double* do_ = dout + (tok0 + t) * d + off;
      const double* prow = P + static_cast<int64_t>(t) * n;
      double* dzrow = dZ.data() + static_cast<int64_t>(t) * n;
      double rowdot = 0.0;
      for (int u = 0; u < n; ++u) {
        const double* v = V + (tok0 + u) * d + off;
        double dp = 0.0;
        for (int c = 0; c < head_dim; ++c) dp += do_[c] * v[c];
        dzrow[u] = dp;
        rowdot += dp * prow[u];
      }
      for (int u = 0; u < n; ++u) dzrow[u] = prow[u] * (dzrow[u] - rowdot);
    }
    for (int t = 0; t < n; ++t) {
      double* dq = dQ + (tok0 + t) * d + off;
      const double* dzrow = dZ.data() + static_cast<int64_t>(t) * n;
      for (int c = 0; c < head_dim; ++c) dq[c] = 0.0;
      for (int u = 0; u < n; ++u) {
        const double z = dzrow[u] * scale;
        const double* kv = K + (tok0 + u) * d + off;
        for (int c = 0; c < head_dim; ++c) dq[c] += z * kv[c];
      }
    }
    for (int u = 0; u < n; ++u) {
      double* dk = dK + (tok0 + u) * d + off;
      double* dv = dV + (tok0 + u) * d + off;
      for (int c = 0; c < head_dim; ++c) {
        dk[c] = 0.0;
        dv[c] = 0.0;
      }
      for (int t = 0; t < n; ++t) {
        const double z = dZ[static_cast<int64_t>(t) * n + u] * scale;
        const double p = P[static_cast<int64_t>(t) * n + u];
        const double* q = Q + (tok0 + t) * d + off;
        const double* do_ = dout + (tok0 + t) * d + off;
        for (int c = 0; c < head_dim; ++c) {
          dk[c] += z * q[c];
          dv[c] += p * do_[c];
        }
      }
    }
  });
}

void mean_over_rows(const double* X, double* out, int rows, int cols) {
  const double inv = 1.0 / rows;
  par_for(cols, [&](int64_t c) {
    double s = 0.0;
    for (int r = 0; r < rows; ++r) s += X[static_cast<int64_t>(r) * cols + c];
    out[c] = s * inv;
  });
}

double dot(const double* a, const double* b, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace vitforge::kernels
