#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "astream/losses.hpp"
#include "astream/rng.hpp"

using namespace astream;

namespace {

LossSpec spec_of(LossKind k, double gamma = 2.0, double alpha = 0.25) {
    LossSpec s;
    s.kind = k;
    s.gamma = gamma;
    s.alpha = alpha;
    return s;
}

LabeledSequence make_seq(std::vector<std::uint8_t> labels, TaskKind task = TaskKind::KWS) {
    LabeledSequence seq;
    seq.labels = std::move(labels);
    seq.features = Tensor::zeros({static_cast<int>(seq.labels.size()), 1});
    seq.task = task;
    seq.id = "t";
    return seq;
}

double tape_sequence_loss(const LabeledSequence& seq, const std::vector<double>& scores,
                          const LossSpec& spec) {
    Tape tape;
    NodeId s = tape.constant(Tensor::from({static_cast<int>(scores.size())}, scores));
    return tape.value(sequence_loss(tape, seq, s, spec))[0];
}

}  // namespace

TEST_CASE("fcel values") {
    CHECK(fcel(1, 1.0 - 1e-6) >= 0.0);
    CHECK(fcel(1, 1.0 - 1e-6) < 1e-5);
    CHECK(fcel(1, 0.5) == doctest::Approx(0.6931471805599453).epsilon(1e-14));
    // direct evaluation: -ln(0.1)
    CHECK(fcel(0, 0.9) == doctest::Approx(2.302585092994046).epsilon(1e-12));
    // clamping keeps the loss finite at the degenerate points
    CHECK(std::isfinite(fcel(1, 0.0)));
    CHECK(std::isfinite(fcel(0, 1.0)));
}

TEST_CASE("focal term values") {
    CHECK(std::abs(focal_term(1.0 - 1e-6, 2.0)) < 1e-11);
    // (1-0.9)^2 * ln(0.9)
    CHECK(focal_term(0.9, 2.0) == doctest::Approx(-0.0010536051565782628).epsilon(1e-12));
    CHECK(focal_term(0.5, 0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
}

TEST_CASE("ffl values") {
    const LossSpec s = spec_of(LossKind::FFL);
    // 0.25 * 0.01 * (-ln 0.9)
    CHECK(ffl(1, 0.9, s) == doctest::Approx(0.0002634012891445657).epsilon(1e-12));
    // 0.75 * 0.01 * (-ln 0.9)
    CHECK(ffl(0, 0.1, s) == doctest::Approx(0.0007902038674336971).epsilon(1e-12));

    // gamma=0, alpha=0.5 collapses to half the cross entropy
    Rng rng(11);
    const LossSpec half = spec_of(LossKind::FFL, 0.0, 0.5);
    for (int i = 0; i < 1000; ++i) {
        const int y = rng.uniform01() < 0.5 ? 1 : 0;
        const double p = rng.uniform(0.01, 0.99);
        CHECK(std::abs(ffl(y, p, half) - 0.5 * fcel(y, p)) < 1e-12);
    }
}

TEST_CASE("frame_loss dispatch and identities") {
    Rng rng(12);
    const LossSpec base = spec_of(LossKind::FCEL);
    for (int i = 0; i < 1000; ++i) {
        const int y = rng.uniform01() < 0.5 ? 1 : 0;
        const double p = rng.uniform(0.001, 0.999);
        const double w = rng.uniform(0.05, 1.0);
        const double gamma = rng.uniform(0.0, 4.0);
        const double alpha = rng.uniform(0.05, 0.95);

        const double sal = frame_loss(y, p, w, spec_of(LossKind::SAL, gamma, alpha));
        const double ffl_v = frame_loss(y, p, w, spec_of(LossKind::FFL, gamma, alpha));
        const double both = frame_loss(y, p, w, spec_of(LossKind::SA_PLUS_FL, gamma, alpha));
        const double safl = frame_loss(y, p, w, spec_of(LossKind::SAFL, gamma, alpha));
        const double ce = frame_loss(y, p, w, base);

        CHECK(std::abs(both - (sal + ffl_v)) < 1e-12);  // additive form
        CHECK(safl <= ffl_v + 1e-15);                   // w <= 1
        CHECK(sal <= ce + 1e-15);
        if (w == 1.0) {
            CHECK(sal == ce);
            CHECK(safl == ffl_v);
        }
    }
    // unit weight: SAL == FCEL exactly
    CHECK(frame_loss(1, 0.3, 1.0, spec_of(LossKind::SAL)) == fcel(1, 0.3));
    // frozen product: 0.7 * ffl(1, 0.9)
    CHECK(frame_loss(1, 0.9, 0.7, spec_of(LossKind::SAFL)) ==
          doctest::Approx(0.7 * 0.0002634012891445657).epsilon(1e-12));
}

TEST_CASE("sequence loss examples") {
    SUBCASE("perfect prediction is ~0") {
        LabeledSequence seq = make_seq({0, 1, 0});
        const double v = tape_sequence_loss(seq, {1e-9, 1.0 - 1e-9, 1e-9}, spec_of(LossKind::FCEL));
        CHECK(v < 1e-5);
    }
    SUBCASE("two equal cross-entropy terms average to ln 2") {
        LabeledSequence seq = make_seq({0, 1});
        const double v = tape_sequence_loss(seq, {0.5, 0.5}, spec_of(LossKind::FCEL));
        CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("SAL with an end anchor at T=3") {
        // weights (1/3, 2/3, 1) -> mean is (2/3) ln 2
        LabeledSequence seq = make_seq({0, 0, 1}, TaskKind::KWS);
        const double v = tape_sequence_loss(seq, {0.5, 0.5, 0.5}, spec_of(LossKind::SAL));
        CHECK(v == doctest::Approx(2.0 / 3.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("length mismatch throws") {
        LabeledSequence seq = make_seq({0, 1});
        Tape tape;
        NodeId s = tape.constant(Tensor::from({3}, {0.5, 0.5, 0.5}));
        CHECK_THROWS_AS(sequence_loss(tape, seq, s, spec_of(LossKind::FCEL)), ShapeError);
    }
}

TEST_CASE("tape losses agree with the scalar forms") {
    Rng rng(13);
    for (LossKind kind : {LossKind::FCEL, LossKind::FFL, LossKind::SAL, LossKind::SA_PLUS_FL,
                          LossKind::SAFL}) {
        CAPTURE(to_string(kind));
        for (int trial = 0; trial < 20; ++trial) {
            const int t_len = 3 + static_cast<int>(rng.uniform_int(0, 8));
            std::vector<std::uint8_t> labels(static_cast<std::size_t>(t_len), 0);
            if (rng.uniform01() < 0.8) {
                const int a = static_cast<int>(rng.uniform_int(0, t_len - 1));
                const int b = static_cast<int>(rng.uniform_int(a, t_len - 1));
                for (int i = a; i <= b; ++i) labels[static_cast<std::size_t>(i)] = 1;
            }
            std::vector<double> scores(static_cast<std::size_t>(t_len));
            for (double& s : scores) s = rng.uniform(0.02, 0.98);
            LabeledSequence seq = make_seq(labels, TaskKind::KWS);
            const LossSpec spec = spec_of(kind, 1.7, 0.3);

            const WeightVector w = weights_for_labels(seq.labels, seq.task, spec.no_anchor_weight);
            double expect = 0.0;
            for (int i = 0; i < t_len; ++i) {
                expect += frame_loss(labels[static_cast<std::size_t>(i)],
                                     scores[static_cast<std::size_t>(i)],
                                     w.weights[static_cast<std::size_t>(i)], spec);
            }
            expect /= t_len;
            CHECK(tape_sequence_loss(seq, scores, spec) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("sequence loss is invariant under simultaneous permutation") {
    Rng rng(14);
    const int t_len = 12;
    std::vector<int> ys(t_len);
    std::vector<double> ps(t_len), ws(t_len);
    for (int i = 0; i < t_len; ++i) {
        ys[static_cast<std::size_t>(i)] = rng.uniform01() < 0.4 ? 1 : 0;
        ps[static_cast<std::size_t>(i)] = rng.uniform(0.05, 0.95);
        ws[static_cast<std::size_t>(i)] = rng.uniform(0.1, 1.0);
    }
    const LossSpec spec = spec_of(LossKind::SAFL);
    auto total = [&](const std::vector<int>& order) {
        double sum = 0.0;
        for (int i : order) {
            sum += frame_loss(ys[static_cast<std::size_t>(i)], ps[static_cast<std::size_t>(i)],
                              ws[static_cast<std::size_t>(i)], spec);
        }
        return sum / t_len;
    };
    std::vector<int> order(t_len);
    for (int i = 0; i < t_len; ++i) order[static_cast<std::size_t>(i)] = i;
    const double before = total(order);
    rng.shuffle(order);
    CHECK(total(order) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("SAFL sequence gradient matches finite differences over 100 seeds") {
    double worst = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(1000 + static_cast<std::uint64_t>(seed));
        const int t_len = 4 + static_cast<int>(rng.uniform_int(0, 6));
        std::vector<std::uint8_t> labels(static_cast<std::size_t>(t_len), 0);
        const int a = static_cast<int>(rng.uniform_int(0, t_len - 2));
        const int b = static_cast<int>(rng.uniform_int(a, t_len - 1));
        for (int i = a; i <= b; ++i) labels[static_cast<std::size_t>(i)] = 1;
        LabeledSequence seq = make_seq(labels, TaskKind::KWS);
        const LossSpec spec = spec_of(LossKind::SAFL);

        std::vector<double> scores(static_cast<std::size_t>(t_len));
        for (double& s : scores) s = rng.uniform(0.05, 0.95);  // away from the clamp edges

        Tape tape;
        NodeId sn = tape.leaf(Tensor::from({t_len}, scores), true);
        tape.backward(sequence_loss(tape, seq, sn, spec));
        const Tensor& grad = tape.grad(sn);

        const double h = 1e-6;
        for (int i = 0; i < t_len; ++i) {
            std::vector<double> up = scores, down = scores;
            up[static_cast<std::size_t>(i)] += h;
            down[static_cast<std::size_t>(i)] -= h;
            const double fd =
                (tape_sequence_loss(seq, up, spec) - tape_sequence_loss(seq, down, spec)) / (2 * h);
            const double g = grad[static_cast<std::size_t>(i)];
            worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6}));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("loss spec validation") {
    LossSpec s = spec_of(LossKind::FFL);
    s.gamma = -0.1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = spec_of(LossKind::FFL);
    s.alpha = 1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(loss_from_string("bogus"), ConfigError);
    CHECK(loss_from_string("sa+fl") == LossKind::SA_PLUS_FL);
}
