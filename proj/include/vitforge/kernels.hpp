#pragma once

#include <cstdint>

namespace vitforge::kernels {

// Every kernel has a serial reference implementation and an OpenMP one.
// Parallel loops assign each output element to exactly one iteration and
// reductions stay serial, so the two backends produce bit-identical results
// for any thread count; the tests assert this.
enum class Backend { serial, openmp };

void set_backend(Backend b);
Backend backend();
bool openmp_available();
int max_threads();
void set_max_threads(int n);

// Row-major dense matmuls. C is (m, n) and is overwritten unless acc is set,
// in which case the product is added to it (used for gradient accumulation).
// matmul_nn: C = A(m,k) * B(k,n)
// matmul_nt: C = A(m,k) * B(n,k)^T
// matmul_tn: C = A(k,m)^T * B(k,n)
void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);

void add_bias_rows(double* X, const double* b, int rows, int cols);
// out[c] += sum_r X[r, c]
void col_sums_acc(const double* X, double* out, int rows, int cols);

void gelu(const double* x, double* y, int64_t n);
// dx = dy * gelu'(x)
void gelu_backward(const double* x, const double* dy, double* dx, int64_t n);

// Per-row normalization over `dim` entries, then affine. mean/rstd are saved
// per row for the backward pass.
void layernorm(const double* x, const double* gamma, const double* beta, double* y,
               double* mean, double* rstd, int rows, int dim, double eps);
// dgamma/dbeta accumulate; dx is overwritten.
void layernorm_backward(const double* x, const double* gamma, const double* mean,
                        const double* rstd, const double* dy, double* dx,
                        double* dgamma, double* dbeta, int rows, int dim);

// In-place, max-subtracted softmax per row.
void softmax_rows(double* x, int rows, int cols);

// Planar conv2d: x is (in_c, H, W), w is (out_c, in_c, k, k), y is (out_c, out_h, out_w).
// Output size is ceil(in / stride); zero padding is whatever that requires,
// split evenly with the extra pixel on the bottom/right. When stride divides
// the input this equals (dilated_extent - stride) total padding.
struct ConvGeom {
  int in_h = 0, in_w = 0;
  int k = 0, stride = 1, dilation = 1;
  int pad_top = 0, pad_left = 0;
  int out_h = 0, out_w = 0;
  int extent() const { return dilation * (k - 1) + 1; }
};
ConvGeom conv_geometry(int in_h, int in_w, int k, int stride, int dilation);

void conv2d(const double* x, const double* w, const double* bias, double* y,
            int in_c, int out_c, const ConvGeom& g);
void conv2d_backward_input(const double* w, const double* dy, double* dx,
                           int in_c, int out_c, const ConvGeom& g);
// dw/db accumulate.
void conv2d_backward_params(const double* x, const double* dy, double* dw, double* db,
                            int in_c, int out_c, const ConvGeom& g);

// Windowed multi-head attention core. Q/K/V/out are (nw * n, d) row-major with
// windows stored contiguously, d = heads * head_dim. probs is
// (nw * heads, n, n) and holds the softmax rows for the backward pass.
void attention_forward(const double* Q, const double* K, const double* V,
                       double* probs, double* out,
                       int nw, int n, int heads, int head_dim);
// dQ/dK/dV are overwritten.
void attention_backward(const double* Q, const double* K, const double* V,
                        const double* probs, const double* dout,
                        double* dQ, double* dK, double* dV,
                        int nw, int n, int heads, int head_dim);

// out[c] = mean over rows of X[r, c]
void mean_over_rows(const double* X, double* out, int rows, int cols);

// Serial in both backends: a single reduction whose order must not depend on
// the thread count.
double dot(const double* a, const double* b, int64_t n);

}  // namespace vitforge::kernels
