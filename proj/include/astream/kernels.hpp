#pragma once

#include <cstddef>

// Dense compute kernels behind the tape ops. Every kernel comes in two
// flavours: the OpenMP-parallel production version in astream::kernels and a
// plain-loop reference in astream::kernels::serial. The parallel versions
// assign each output element to exactly one thread and keep every reduction
// loop serial and in fixed index order, so results are bit-identical to the
// reference for any thread count. tests/test_kernels.cpp holds the two
// implementations against each other; bench/ compares their throughput.

namespace astream::kernels {

// out[M,N] = a[M,K] * b[K,N]      (accumulate: out +=)
void gemm_nn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate);
// out[M,N] = a[M,K] * b[N,K]^T
void gemm_nt(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate);
// out[K,N] = a[M,K]^T * b[M,N]
void gemm_tn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate);

// Causal depthwise 1-D convolution over [B,T,C] with kernel [C,K] and
// dilation d. Tap j reaches back (K-1-j)*d frames; out-of-range taps read 0.
void dwconv_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int c, int k, int dilation);
// Gradients; any of dx/dw/dbias may be null to skip. dx is overwritten,
// dw/dbias are accumulated into.
void dwconv_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int c, int k, int dilation);

// Causal full 1-D convolution [B,T,Ci] -> [B,T,Co], kernel [Co,Ci,K].
void conv1d_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int ci, int co, int k, int dilation);
void conv1d_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int ci, int co, int k, int dilation);

namespace serial {

void gemm_nn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate);
void dwconv_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int c, int k, int dilation);
void dwconv_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int c, int k, int dilation);
void conv1d_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int ci, int co, int k, int dilation);
void conv1d_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int ci, int co, int k, int dilation);

}  // namespace serial
}  // namespace astream::kernels
