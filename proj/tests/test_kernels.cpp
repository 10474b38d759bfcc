#include <doctest.h>

#include <cstring>
#include <vector>

#include "astream/kernels.hpp"
#include "astream/rng.hpp"

using namespace astream;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("gemm variants match the serial reference bit for bit") {
    Rng rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        const int m = 1 + static_cast<int>(rng.uniform_int(0, 40));
        const int k = 1 + static_cast<int>(rng.uniform_int(0, 40));
        const int n = 1 + static_cast<int>(rng.uniform_int(0, 40));
        const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
        const auto b_nn = random_vec(static_cast<std::size_t>(k) * n, rng);
        const auto b_nt = random_vec(static_cast<std::size_t>(n) * k, rng);
        const auto b_tn = random_vec(static_cast<std::size_t>(m) * n, rng);
        const auto seed_out = random_vec(static_cast<std::size_t>(m) * n, rng);

        for (bool acc : {false, true}) {
            auto out1 = seed_out, out2 = seed_out;
            kernels::gemm_nn(a.data(), b_nn.data(), out1.data(), m, k, n, acc);
            kernels::serial::gemm_nn(a.data(), b_nn.data(), out2.data(), m, k, n, acc);
            CHECK(bit_equal(out1, out2));

            out1 = seed_out, out2 = seed_out;
            kernels::gemm_nt(a.data(), b_nt.data(), out1.data(), m, k, n, acc);
            kernels::serial::gemm_nt(a.data(), b_nt.data(), out2.data(), m, k, n, acc);
            CHECK(bit_equal(out1, out2));

            auto out3 = random_vec(static_cast<std::size_t>(k) * n, rng);
            auto out4 = out3;
            kernels::gemm_tn(a.data(), b_tn.data(), out3.data(), m, k, n, acc);
            kernels::serial::gemm_tn(a.data(), b_tn.data(), out4.data(), m, k, n, acc);
            CHECK(bit_equal(out3, out4));
        }
    }
}

TEST_CASE("conv kernels match the serial reference bit for bit") {
    Rng rng(32);
    for (int trial = 0; trial < 6; ++trial) {
        const int b = 1 + static_cast<int>(rng.uniform_int(0, 3));
        const int t = 5 + static_cast<int>(rng.uniform_int(0, 60));
        const int c = 1 + static_cast<int>(rng.uniform_int(0, 12));
        const int k = 1 + static_cast<int>(rng.uniform_int(0, 4));
        const int d = 1 + static_cast<int>(rng.uniform_int(0, 5));
        const auto x = random_vec(static_cast<std::size_t>(b) * t * c, rng);
        const auto w = random_vec(static_cast<std::size_t>(c) * k, rng);
        const auto bias = random_vec(static_cast<std::size_t>(c), rng);
        const auto dout = random_vec(static_cast<std::size_t>(b) * t * c, rng);

        std::vector<double> o1(x.size()), o2(x.size());
        kernels::dwconv_fwd(x.data(), w.data(), bias.data(), o1.data(), b, t, c, k, d);
        kernels::serial::dwconv_fwd(x.data(), w.data(), bias.data(), o2.data(), b, t, c, k, d);
        CHECK(bit_equal(o1, o2));

        std::vector<double> dx1(x.size()), dx2(x.size());
        std::vector<double> dw1(w.size(), 0.25), dw2(w.size(), 0.25);
        std::vector<double> db1(bias.size(), -0.5), db2(bias.size(), -0.5);
        kernels::dwconv_bwd(x.data(), w.data(), dout.data(), dx1.data(), dw1.data(), db1.data(), b,
                            t, c, k, d);
        kernels::serial::dwconv_bwd(x.data(), w.data(), dout.data(), dx2.data(), dw2.data(),
                                    db2.data(), b, t, c, k, d);
        CHECK(bit_equal(dx1, dx2));
        CHECK(bit_equal(dw1, dw2));
        CHECK(bit_equal(db1, db2));

        const int co = 1 + static_cast<int>(rng.uniform_int(0, 6));
        const auto wf = random_vec(static_cast<std::size_t>(co) * c * k, rng);
        const auto biasf = random_vec(static_cast<std::size_t>(co), rng);
        const auto doutf = random_vec(static_cast<std::size_t>(b) * t * co, rng);
        std::vector<double> f1(static_cast<std::size_t>(b) * t * co), f2(f1.size());
        kernels::conv1d_fwd(x.data(), wf.data(), biasf.data(), f1.data(), b, t, c, co, k, d);
        kernels::serial::conv1d_fwd(x.data(), wf.data(), biasf.data(), f2.data(), b, t, c, co, k, d);
        CHECK(bit_equal(f1, f2));

        std::vector<double> fdx1(x.size()), fdx2(x.size());
        std::vector<double> fdw1(wf.size(), 0.0), fdw2(wf.size(), 0.0);
        std::vector<double> fdb1(biasf.size(), 0.0), fdb2(biasf.size(), 0.0);
        kernels::conv1d_bwd(x.data(), wf.data(), doutf.data(), fdx1.data(), fdw1.data(),
                            fdb1.data(), b, t, c, co, k, d);
        kernels::serial::conv1d_bwd(x.data(), wf.data(), doutf.data(), fdx2.data(), fdw2.data(),
                                    fdb2.data(), b, t, c, co, k, d);
        CHECK(bit_equal(fdx1, fdx2));
        CHECK(bit_equal(fdw1, fdw2));
        CHECK(bit_equal(fdb1, fdb2));
    }
}

TEST_CASE("depthwise convolution against a direct per-frame oracle") {
    Rng rng(33);
    const int b = 2, t = 12, c = 3, k = 3, d = 2;
    const auto x = random_vec(static_cast<std::size_t>(b) * t * c, rng);
    const auto w = random_vec(static_cast<std::size_t>(c) * k, rng);
    const auto bias = random_vec(static_cast<std::size_t>(c), rng);
    std::vector<double> out(x.size());
    kernels::dwconv_fwd(x.data(), w.data(), bias.data(), out.data(), b, t, c, k, d);

    for (int bi = 0; bi < b; ++bi) {
        for (int ti = 0; ti < t; ++ti) {
            for (int ci = 0; ci < c; ++ci) {
                double want = bias[static_cast<std::size_t>(ci)];
                for (int j = 0; j < k; ++j) {
                    const int src = ti - (k - 1 - j) * d;
                    if (src >= 0) {
                        want += w[static_cast<std::size_t>(ci) * k + j] *
                                x[(static_cast<std::size_t>(bi) * t + src) * c + ci];
                    }
                }
                CHECK(out[(static_cast<std::size_t>(bi) * t + ti) * c + ci] ==
                      doctest::Approx(want).epsilon(1e-14));
            }
        }
    }
}
