#include "astream/kernels.hpp"

namespace astream::kernels {

// Work threshold below which spawning a team costs more than it saves.
static constexpr long kParallelCutoff = 16 * 1024;

// --------------------------------------------------------------------------
// GEMM
// --------------------------------------------------------------------------

void gemm_nn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate) {
    const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for if (work > kParallelCutoff) schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* oi = out + static_cast<std::size_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) oi[j] = 0.0;
        }
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate) {
    const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for if (work > kParallelCutoff) schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* oi = out + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            oi[j] = accumulate ? oi[j] + acc : acc;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate) {
    const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for if (work > kParallelCutoff) schedule(static)
    for (int i = 0; i < k; ++i) {
        double* oi = out + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < m; ++p) {
                acc += a[static_cast<std::size_t>(p) * k + i] * b[static_cast<std::size_t>(p) * n + j];
            }
            oi[j] = accumulate ? oi[j] + acc : acc;
        }
    }
}

// --------------------------------------------------------------------------
// Depthwise causal 1-D convolution
// --------------------------------------------------------------------------

void dwconv_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int c, int k, int dilation) {
    const long frames = static_cast<long>(b) * t;
    const long work = frames * c * k;
#pragma omp parallel for if (work > kParallelCutoff) schedule(static)
    for (long f = 0; f < frames; ++f) {
        const int bi = static_cast<int>(f / t);
        const int ti = static_cast<int>(f % t);
        const double* xb = x + static_cast<std::size_t>(bi) * t * c;
        double* of = out + (static_cast<std::size_t>(bi) * t + ti) * c;
        for (int ci = 0; ci < c; ++ci) {
            double acc = bias ? bias[ci] : 0.0;
            for (int j = 0; j < k; ++j) {
                const int src = ti - (k - 1 - j) * dilation;
                if (src >= 0) acc += w[static_cast<std::size_t>(ci) * k + j] * xb[static_cast<std::size_t>(src) * c + ci];
            }
            of[ci] = acc;
        }
    }
}

void dwconv_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int c, int k, int dilation) {
    const long frames = static_cast<long>(b) * t;
    if (dx) {
#pragma omp parallel for if (frames * c * k > kParallelCutoff) schedule(static)
        for (long f = 0; f < frames; ++f) {
            const int bi = static_cast<int>(f / t);
            const int ti = static_cast<int>(f % t);
            const double* db = dout + static_cast<std::size_t>(bi) * t * c;
            double* dxf = dx + (static_cast<std::size_t>(bi) * t + ti) * c;
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                for (int j = 0; j < k; ++j) {
                    const int dst = ti + (k - 1 - j) * dilation;
                    if (dst < t) acc += w[static_cast<std::size_t>(ci) * k + j] * db[static_cast<std::size_t>(dst) * c + ci];
                }
                dxf[ci] = acc;
            }
        }
    }
    if (dw) {
        // Per-channel reductions run serially over (b,t) in fixed order.
#pragma omp parallel for if (frames * c * k > kParallelCutoff) schedule(static)
        for (int ci = 0; ci < c; ++ci) {
            for (int j = 0; j < k; ++j) {
                double acc = 0.0;
                const int back = (k - 1 - j) * dilation;
                for (int bi = 0; bi < b; ++bi) {
                    const double* xb = x + static_cast<std::size_t>(bi) * t * c;
                    const double* db = dout + static_cast<std::size_t>(bi) * t * c;
                    for (int ti = back; ti < t; ++ti) {
                        acc += xb[static_cast<std::size_t>(ti - back) * c + ci] * db[static_cast<std::size_t>(ti) * c + ci];
                    }
                }
                dw[static_cast<std::size_t>(ci) * k + j] += acc;
            }
        }
    }
    if (dbias) {
#pragma omp parallel for if (frames * c > kParallelCutoff) schedule(static)
        for (int ci = 0; ci < c; ++ci) {
            double acc = 0.0;
            for (long f = 0; f < frames; ++f) acc += dout[static_cast<std::size_t>(f) * c + ci];
            dbias[ci] += acc;
        }
    }
}

// --------------------------------------------------------------------------
// Full causal 1-D convolution
// --------------------------------------------------------------------------

void conv1d_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int ci, int co, int k, int dilation) {
    const long frames = static_cast<long>(b) * t;
    const long work = frames * ci * co * k;
#pragma omp parallel for if (work > kParallelCutoff) schedule(static)
    for (long f = 0; f < frames; ++f) {
        const int bi = static_cast<int>(f / t);
        const int ti = static_cast<int>(f % t);
        const double* xb = x + static_cast<std::size_t>(bi) * t * ci;
        double* of = out + (static_cast<std::size_t>(bi) * t + ti) * co;
        for (int o = 0; o < co; ++o) {
            double acc = bias ? bias[o] : 0.0;
            const double* wo = w + static_cast<std::size_t>(o) * ci * k;
            for (int j = 0; j < k; ++j) {
                const int src = ti - (k - 1 - j) * dilation;
                if (src < 0) continue;
                const double* xf = xb + static_cast<std::size_t>(src) * ci;
                for (int c = 0; c < ci; ++c) acc += wo[static_cast<std::size_t>(c) * k + j] * xf[c];
            }
            of[o] = acc;
        }
    }
}

void conv1d_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int ci, int co, int k, int dilation) {
    const long frames = static_cast<long>(b) * t;
    if (dx) {
#pragma omp parallel for if (frames * ci * co * k > kParallelCutoff) schedule(static)
        for (long f = 0; f < frames; ++f) {
            const int bi = static_cast<int>(f / t);
            const int ti = static_cast<int>(f % t);
            const double* db = dout + static_cast<std::size_t>(bi) * t * co;
            double* dxf = dx + (static_cast<std::size_t>(bi) * t + ti) * ci;
            for (int c = 0; c < ci; ++c) {
                double acc = 0.0;
                for (int o = 0; o < co; ++o) {
                    const double* wo = w + (static_cast<std::size_t>(o) * ci + c) * k;
                    for (int j = 0; j < k; ++j) {
                        const int dst = ti + (k - 1 - j) * dilation;
                        if (dst < t) acc += wo[j] * db[static_cast<std::size_t>(dst) * co + o];
                    }
                }
                dxf[c] = acc;
            }
        }
    }
    if (dw) {
#pragma omp parallel for if (frames * ci * co * k > kParallelCutoff) schedule(static)
        for (int o = 0; o < co; ++o) {
            for (int c = 0; c < ci; ++c) {
                for (int j = 0; j < k; ++j) {
                    const int back = (k - 1 - j) * dilation;
                    double acc = 0.0;
                    for (int bi = 0; bi < b; ++bi) {
                        const double* xb = x + static_cast<std::size_t>(bi) * t * ci;
                        const double* db = dout + static_cast<std::size_t>(bi) * t * co;
                        for (int ti = back; ti < t; ++ti) {
                            acc += xb[static_cast<std::size_t>(ti - back) * ci + c] * db[static_cast<std::size_t>(ti) * co + o];
                        }
                    }
                    dw[(static_cast<std::size_t>(o) * ci + c) * k + j] += acc;
                }
            }
        }
    }
    if (dbias) {
#pragma omp parallel for if (frames * co > kParallelCutoff) schedule(static)
        for (int o = 0; o < co; ++o) {
            double acc = 0.0;
            for (long f = 0; f < frames; ++f) acc += dout[static_cast<std::size_t>(f) * co + o];
            dbias[o] += acc;
        }
    }
}

// --------------------------------------------------------------------------
// Serial reference implementations
// --------------------------------------------------------------------------

namespace serial {

void gemm_nn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = accumulate ? out[static_cast<std::size_t>(i) * n + j] : 0.0;
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
            }
            out[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
}

void gemm_nt(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(j) * k + p];
            }
            std::size_t idx = static_cast<std::size_t>(i) * n + j;
            out[idx] = accumulate ? out[idx] + acc : acc;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* out, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < m; ++p) {
                acc += a[static_cast<std::size_t>(p) * k + i] * b[static_cast<std::size_t>(p) * n + j];
            }
            std::size_t idx = static_cast<std::size_t>(i) * n + j;
            out[idx] = accumulate ? out[idx] + acc : acc;
        }
    }
}

void dwconv_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int c, int k, int dilation) {
    for (int bi = 0; bi < b; ++bi) {
        for (int ti = 0; ti < t; ++ti) {
            for (int ci = 0; ci < c; ++ci) {
                double acc = bias ? bias[ci] : 0.0;
                for (int j = 0; j < k; ++j) {
                    const int src = ti - (k - 1 - j) * dilation;
                    if (src >= 0) {
                        acc += w[static_cast<std::size_t>(ci) * k + j] *
                               x[(static_cast<std::size_t>(bi) * t + src) * c + ci];
                    }
                }
                out[(static_cast<std::size_t>(bi) * t + ti) * c + ci] = acc;
            }
        }
    }
}

void dwconv_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int c, int k, int dilation) {
    if (dx) {
        for (int bi = 0; bi < b; ++bi) {
            for (int ti = 0; ti < t; ++ti) {
                for (int ci = 0; ci < c; ++ci) {
                    double acc = 0.0;
                    for (int j = 0; j < k; ++j) {
                        const int dst = ti + (k - 1 - j) * dilation;
                        if (dst < t) {
                            acc += w[static_cast<std::size_t>(ci) * k + j] *
                                   dout[(static_cast<std::size_t>(bi) * t + dst) * c + ci];
                        }
                    }
                    dx[(static_cast<std::size_t>(bi) * t + ti) * c + ci] = acc;
                }
            }
        }
    }
    if (dw) {
        for (int ci = 0; ci < c; ++ci) {
            for (int j = 0; j < k; ++j) {
                double acc = 0.0;
                const int back = (k - 1 - j) * dilation;
                for (int bi = 0; bi < b; ++bi) {
                    for (int ti = back; ti < t; ++ti) {
                        acc += x[(static_cast<std::size_t>(bi) * t + ti - back) * c + ci] *
                               dout[(static_cast<std::size_t>(bi) * t + ti) * c + ci];
                    }
                }
                dw[static_cast<std::size_t>(ci) * k + j] += acc;
            }
        }
    }
    if (dbias) {
        for (int ci = 0; ci < c; ++ci) {
            double acc = 0.0;
            for (long f = 0; f < static_cast<long>(b) * t; ++f) {
                acc += dout[static_cast<std::size_t>(f) * c + ci];
            }
            dbias[ci] += acc;
        }
    }
}

void conv1d_fwd(const double* x, const double* w, const double* bias, double* out,
                int b, int t, int ci, int co, int k, int dilation) {
    for (int bi = 0; bi < b; ++bi) {
        for (int ti = 0; ti < t; ++ti) {
            for (int o = 0; o < co; ++o) {
                double acc = bias ? bias[o] : 0.0;
                for (int j = 0; j < k; ++j) {
                    const int src = ti - (k - 1 - j) * dilation;
                    if (src < 0) continue;
                    for (int c = 0; c < ci; ++c) {
                        acc += w[(static_cast<std::size_t>(o) * ci + c) * k + j] *
                               x[(static_cast<std::size_t>(bi) * t + src) * ci + c];
                    }
                }
                out[(static_cast<std::size_t>(bi) * t + ti) * co + o] = acc;
            }
        }
    }
}

void conv1d_bwd(const double* x, const double* w, const double* dout,
                double* dx, double* dw, double* dbias,
                int b, int t, int ci, int co, int k, int dilation) {
    if (dx) {
        for (int bi = 0; bi < b; ++bi) {
            for (int ti = 0; ti < t; ++ti) {
                for (int c = 0; c < ci; ++c) {
                    double acc = 0.0;
                    for (int o = 0; o < co; ++o) {
                        for (int j = 0; j < k; ++j) {
                            const int dst = ti + (k - 1 - j) * dilation;
                            if (dst < t) {
                                acc += w[(static_cast<std::size_t>(o) * ci + c) * k + j] *
                                       dout[(static_cast<std::size_t>(bi) * t + dst) * co + o];
                            }
                        }
                    }
                    dx[(static_cast<std::size_t>(bi) * t + ti) * ci + c] = acc;
                }
            }
        }
    }
    if (dw) {
        for (int o = 0; o < co; ++o) {
            for (int c = 0; c < ci; ++c) {
                for (int j = 0; j < k; ++j) {
                    const int back = (k - 1 - j) * dilation;
                    double acc = 0.0;
                    for (int bi = 0; bi < b; ++bi) {
                        for (int ti = back; ti < t; ++ti) {
                            acc += x[(static_cast<std::size_t>(bi) * t + ti - back) * ci + c] *
                                   dout[(static_cast<std::size_t>(bi) * t + ti) * co + o];
                        }
                    }
                    dw[(static_cast<std::size_t>(o) * ci + c) * k + j] += acc;
                }
            }
        }
    }
    if (dbias) {
        for (int o = 0; o < co; ++o) {
            double acc = 0.0;
            for (long f = 0; f < static_cast<long>(b) * t; ++f) {
                acc += dout[static_cast<std::size_t>(f) * co + o];
            }
            dbias[o] += acc;
        }
    }
}

}  // namespace serial
}  // namespace astream::kernels
