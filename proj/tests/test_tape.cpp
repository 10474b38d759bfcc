#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "astream/rng.hpp"
#include "astream/tape.hpp"

using namespace astream;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

using GraphBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

double eval_scalar(const GraphBuilder& build, const std::vector<Tensor>& inputs) {
    Tape tape(false);
    std::vector<NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t, false));
    return tape.value(build(tape, ids))[0];
}

// Central finite differences against the analytic gradient for every element
// of every input. Returns the max relative error.
double fd_max_rel_error(const GraphBuilder& build, std::vector<Tensor> inputs, double h = 1e-6) {
    Tape tape(true);
    std::vector<NodeId> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t, true));
    NodeId loss = build(tape, ids);
    tape.backward(loss);

    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& analytic = tape.grad(ids[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double save = inputs[k][i];
            inputs[k][i] = save + h;
            const double up = eval_scalar(build, inputs);
            inputs[k][i] = save - h;
            const double down = eval_scalar(build, inputs);
            inputs[k][i] = save;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("forward op values") {
    Tape tape;
    SUBCASE("sigmoid(0) = 0.5") {
        NodeId x = tape.constant(Tensor::scalar(0.0));
        CHECK(tape.value(tape.sigmoid(x))[0] == 0.5);
    }
    SUBCASE("matmul by identity is identity") {
        NodeId eye = tape.constant(Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
        NodeId a = tape.constant(Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}));
        const Tensor& out = tape.value(tape.matmul(eye, a));
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == tape.value(a)[i]);
    }
    SUBCASE("conv1d with identity kernel") {
        NodeId x = tape.constant(Tensor::from({1, 3, 1}, {1, 2, 3}));
        NodeId k = tape.constant(Tensor::from({1, 1, 1}, {1}));
        NodeId b = tape.constant(Tensor::zeros({1}));
        const Tensor& out = tape.value(tape.conv1d(x, k, b, 1));
        CHECK(out[0] == 1.0);
        CHECK(out[1] == 2.0);
        CHECK(out[2] == 3.0);
    }
}

TEST_CASE("analytic derivatives at fixed points") {
    SUBCASE("d(x*x)/dx at 3 is 6") {
        Tape tape;
        NodeId x = tape.leaf(Tensor::scalar(3.0), true);
        NodeId y = tape.mul(x, x);
        tape.backward(y);
        CHECK(tape.grad(x)[0] == 6.0);
    }
    SUBCASE("d(log x)/dx at 2 is 0.5") {
        Tape tape;
        NodeId x = tape.leaf(Tensor::scalar(2.0), true);
        NodeId y = tape.log(x);
        tape.backward(y);
        CHECK(tape.grad(x)[0] == 0.5);
    }
}

TEST_CASE("finite-difference checks for every primitive") {
    Rng rng(20240817);
    auto reduce = [](Tape& t, NodeId x) {
        // deterministic weighted reduction so the loss is a plain scalar
        Tensor coeffs = Tensor::zeros(t.value(x).shape());
        for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
        return t.dot_const(x, std::move(coeffs));
    };

    SUBCASE("elementwise binary ops") {
        for (const char* op : {"add", "sub", "mul", "max"}) {
            CAPTURE(op);
            std::vector<Tensor> in{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
            // keep max() away from ties
            for (std::size_t i = 0; i < in[0].size(); ++i) {
                if (std::abs(in[0][i] - in[1][i]) < 0.05) in[1][i] += 0.1;
            }
            std::string name = op;
            const double err = fd_max_rel_error(
                [&, name](Tape& t, const std::vector<NodeId>& ids) {
                    NodeId z = name == "add"   ? t.add(ids[0], ids[1])
                               : name == "sub" ? t.sub(ids[0], ids[1])
                               : name == "mul" ? t.mul(ids[0], ids[1])
                                               : t.max(ids[0], ids[1]);
                    return reduce(t, z);
                },
                in);
            CHECK(err < 1e-5);
        }
    }

    SUBCASE("elementwise unary ops") {
        std::vector<Tensor> in{random_tensor({2, 5}, rng, 0.2, 1.4)};  // off log/pow edges
        for (int which = 0; which < 8; ++which) {
            CAPTURE(which);
            const double err = fd_max_rel_error(
                [&, which](Tape& t, const std::vector<NodeId>& ids) {
                    NodeId z = ids[0];
                    switch (which) {
                        case 0: z = t.sigmoid(z); break;
                        case 1: z = t.tanh(z); break;
                        case 2: z = t.log(z); break;
                        case 3: z = t.exp(z); break;
                        case 4: z = t.pow(z, 2.3); break;
                        case 5: z = t.scale(z, -1.7); break;
                        case 6: z = t.rsub_scalar(2.0, z); break;
                        case 7: z = t.add_scalar(z, 0.3); break;
                    }
                    return reduce(t, z);
                },
                in);
            CHECK(err < 1e-5);
        }
    }

    SUBCASE("relu and clamp away from kinks") {
        std::vector<Tensor> in{random_tensor({2, 6}, rng)};
        for (std::size_t i = 0; i < in[0].size(); ++i) {
            if (std::abs(in[0][i]) < 0.05) in[0][i] = 0.2;                   // relu kink
            if (std::abs(std::abs(in[0][i]) - 1.0) < 0.05) in[0][i] *= 0.8;  // clamp kinks
        }
        CHECK(fd_max_rel_error([&](Tape& t, const std::vector<NodeId>& ids) {
                  return reduce(t, t.relu(ids[0]));
              }, in) < 1e-5);
        CHECK(fd_max_rel_error([&](Tape& t, const std::vector<NodeId>& ids) {
                  return reduce(t, t.clamp(ids[0], -1.0, 1.0));
              }, in) < 1e-5);
    }

    SUBCASE("matmul and add_rowvec") {
        std::vector<Tensor> in{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng),
                               random_tensor({2}, rng)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      return reduce(t, t.add_rowvec(t.matmul(ids[0], ids[1]), ids[2]));
                  },
                  in) < 1e-5);
    }

    SUBCASE("depthwise and full conv1d") {
        std::vector<Tensor> in{random_tensor({2, 9, 3}, rng), random_tensor({3, 3}, rng),
                               random_tensor({3}, rng)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      return reduce(t, t.dwconv1d(ids[0], ids[1], ids[2], 2));
                  },
                  in) < 1e-5);
        std::vector<Tensor> in2{random_tensor({2, 7, 3}, rng), random_tensor({4, 3, 2}, rng),
                                random_tensor({4}, rng)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      return reduce(t, t.conv1d(ids[0], ids[1], ids[2], 3));
                  },
                  in2) < 1e-5);
    }

    SUBCASE("fused lstm") {
        const int h = 4, i_dim = 3;
        std::vector<Tensor> in{random_tensor({2, 5, i_dim}, rng, -0.8, 0.8),
                               random_tensor({i_dim, 4 * h}, rng, -0.5, 0.5),
                               random_tensor({h, 4 * h}, rng, -0.5, 0.5),
                               random_tensor({4 * h}, rng, -0.3, 0.3)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      return reduce(t, t.lstm(ids[0], ids[1], ids[2], ids[3]));
                  },
                  in) < 1e-5);
    }

    SUBCASE("fused gru") {
        const int h = 4, i_dim = 2;
        std::vector<Tensor> in{random_tensor({2, 5, i_dim}, rng, -0.8, 0.8),
                               random_tensor({i_dim, 3 * h}, rng, -0.5, 0.5),
                               random_tensor({h, 3 * h}, rng, -0.5, 0.5),
                               random_tensor({3 * h}, rng, -0.3, 0.3)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      return reduce(t, t.gru(ids[0], ids[1], ids[2], ids[3]));
                  },
                  in) < 1e-5);
    }

    SUBCASE("shape ops, reductions and heads") {
        std::vector<Tensor> in{random_tensor({2, 4, 3}, rng)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      NodeId a = t.slice_time(ids[0], 1);
                      NodeId b = t.slice_time(ids[0], 3);
                      NodeId joined = t.concat_time({a, b});
                      NodeId flat = t.reshape(t.slice_time_range(joined, 0, 2), {2 * 2 * 3});
                      return t.mean(flat);
                  },
                  in) < 1e-5);
        std::vector<Tensor> logits{random_tensor({5, 2}, rng)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      return reduce(t, t.pair_softmax_p1(ids[0]));
                  },
                  logits) < 1e-5);
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) { return t.sum(ids[0]); },
                  std::vector<Tensor>{random_tensor({7}, rng)}) < 1e-5);
        std::vector<Tensor> masked{random_tensor({3, 3}, rng)};
        CHECK(fd_max_rel_error(
                  [&](Tape& t, const std::vector<NodeId>& ids) {
                      Tensor mask = Tensor::zeros({3, 3});
                      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 2) ? 0.0 : 1.25;
                      return reduce(t, t.mul_const(ids[0], std::move(mask)));
                  },
                  masked) < 1e-5);
    }
}

TEST_CASE("backward linearity: grad of sum equals sum of grads") {
    Rng rng(7);
    const Tensor x0 = random_tensor({4, 3}, rng, 0.2, 1.2);

    auto grads_for = [&](int which) {
        Tape tape;
        NodeId x = tape.leaf(x0, true);
        NodeId f = tape.mean(tape.mul(x, tape.log(x)));
        NodeId g = tape.mean(tape.sigmoid(x));
        NodeId loss = which == 0 ? f : which == 1 ? g : tape.add(f, g);
        tape.backward(loss);
        return tape.grad(x);
    };

    const Tensor gf = grads_for(0);
    const Tensor gg = grads_for(1);
    const Tensor gsum = grads_for(2);
    for (std::size_t i = 0; i < gsum.size(); ++i) {
        CHECK(std::abs(gsum[i] - (gf[i] + gg[i])) < 1e-12);
    }
}

TEST_CASE("deterministic gradients run to run") {
    auto run = [] {
        Rng rng(99);
        Tape tape;
        NodeId x = tape.leaf(random_tensor({3, 8, 2}, rng, -0.9, 0.9), true);
        NodeId wx = tape.leaf(random_tensor({2, 12}, rng, -0.5, 0.5), true);
        NodeId wh = tape.leaf(random_tensor({4, 12}, rng, -0.5, 0.5), true);
        NodeId b = tape.leaf(random_tensor({12}, rng, -0.2, 0.2), true);
        NodeId loss = tape.mean(tape.gru(x, wx, wh, b));
        tape.backward(loss);
        std::vector<double> all;
        for (NodeId id : {x, wx, wh, b}) {
            const Tensor& g = tape.grad(id);
            all.insert(all.end(), g.values().begin(), g.values().end());
        }
        return all;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("tape error contracts") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::from({2}, {1.0, 2.0}), true);
    SUBCASE("backward needs a scalar") {
        CHECK_THROWS_AS(tape.backward(x), Error);
    }
    SUBCASE("shape mismatch names the op and shapes") {
        NodeId y = tape.constant(Tensor::from({3}, {1.0, 2.0, 3.0}));
        try {
            tape.add(x, y);
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("add") != std::string::npos);
            CHECK(msg.find("[2]") != std::string::npos);
            CHECK(msg.find("[3]") != std::string::npos);
        }
    }
    SUBCASE("matmul inner mismatch") {
        NodeId a = tape.constant(Tensor::zeros({2, 3}));
        NodeId b = tape.constant(Tensor::zeros({4, 2}));
        CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
    }
    SUBCASE("non-finite values are rejected at the producing op") {
        NodeId bad = tape.constant(Tensor::from({1}, {-1.0}));
        CHECK_THROWS_AS(tape.log(bad), Error);
    }
}
