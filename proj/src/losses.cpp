#include "astream/losses.hpp"

#include <cmath>

namespace astream {

LossKind loss_from_string(const std::string& s) {
    if (s == "fcel") return LossKind::FCEL;
    if (s == "ffl") return LossKind::FFL;
    if (s == "sal") return LossKind::SAL;
    if (s == "sa+fl" || s == "safl+" || s == "sa_plus_fl") return LossKind::SA_PLUS_FL;
    if (s == "safl") return LossKind::SAFL;
    throw ConfigError("unknown loss '" + s + "' (expected fcel, ffl, sal, sa+fl, or safl)");
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::FCEL: return "fcel";
        case LossKind::FFL: return "ffl";
        case LossKind::SAL: return "sal";
        case LossKind::SA_PLUS_FL: return "sa+fl";
        case LossKind::SAFL: return "safl";
    }
    return "?";
}

void LossSpec::validate() const {
    if (gamma < 0.0) throw ConfigError("loss: gamma must be >= 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("loss: alpha must be in (0,1)");
    if (!(no_anchor_weight > 0.0 && no_anchor_weight <= 1.0)) {
        throw ConfigError("loss: no_anchor_weight must be in (0,1]");
    }
}

double fcel(int y, double p) {
    p = clamp_prob(p);
    return y ? -std::log(p) : -std::log(1.0 - p);
}

double focal_term(double s, double gamma) {
    s = clamp_prob(s);
    return std::pow(1.0 - s, gamma) * std::log(s);
}

double ffl(int y, double p, const LossSpec& spec) {
    p = clamp_prob(p);
    return y ? -spec.alpha * focal_term(p, spec.gamma)
             : -(1.0 - spec.alpha) * focal_term(1.0 - p, spec.gamma);
}

double frame_loss(int y, double p, double w, const LossSpec& spec) {
    switch (spec.kind) {
        case LossKind::FCEL: return fcel(y, p);
        case LossKind::FFL: return ffl(y, p, spec);
        case LossKind::SAL: return w * fcel(y, p);
        case LossKind::SA_PLUS_FL: return w * fcel(y, p) + ffl(y, p, spec);
        case LossKind::SAFL: return w * ffl(y, p, spec);
    }
    throw ConfigError("frame_loss: unknown loss kind");
}

namespace {

// Builds -[c_pos*log(p) + c_neg*log(1-p)] with per-element constant
// coefficient tensors; covers both the cross-entropy and focal branches.
NodeId weighted_ce(Tape& tape, NodeId p_clamped, NodeId log_p, NodeId log_q, Tensor c_pos,
                   Tensor c_neg, double gamma) {
    NodeId pos_term, neg_term;
    if (gamma == 0.0) {
        pos_term = tape.mul_const(log_p, std::move(c_pos));
        neg_term = tape.mul_const(log_q, std::move(c_neg));
    } else {
        NodeId one_minus_p = tape.rsub_scalar(1.0, p_clamped);
        pos_term = tape.mul_const(tape.mul(tape.pow(one_minus_p, gamma), log_p), std::move(c_pos));
        neg_term = tape.mul_const(tape.mul(tape.pow(p_clamped, gamma), log_q), std::move(c_neg));
    }
    return tape.scale(tape.add(pos_term, neg_term), -1.0);
}

struct BatchCoeffs {
    Tensor y;         // labels as doubles, padded 0
    Tensor reduce;    // mask / (T_b * B): dot with the per-frame loss = final loss
    Tensor reduce_w;  // same, multiplied by anchor weights
};

BatchCoeffs make_coeffs(const std::vector<const LabeledSequence*>& batch, int t_max,
                        const LossSpec& spec, bool want_weights) {
    const int b = static_cast<int>(batch.size());
    BatchCoeffs c;
    c.y = Tensor::zeros({b, t_max});
    c.reduce = Tensor::zeros({b, t_max});
    if (want_weights) c.reduce_w = Tensor::zeros({b, t_max});
    for (int bi = 0; bi < b; ++bi) {
        const LabeledSequence& seq = *batch[static_cast<std::size_t>(bi)];
        const int t_len = seq.frames();
        if (t_len < 1 || t_len > t_max) {
            throw ShapeError("batch_sequence_loss: sequence '" + seq.id + "' has " +
                             std::to_string(t_len) + " frames, batch window is " +
                             std::to_string(t_max));
        }
        if (static_cast<int>(seq.labels.size()) != t_len) {
            throw ShapeError("batch_sequence_loss: sequence '" + seq.id + "' has " +
                             std::to_string(seq.labels.size()) + " labels for " +
                             std::to_string(t_len) + " frames");
        }
        const double norm = 1.0 / (static_cast<double>(t_len) * static_cast<double>(b));
        WeightVector w;
        if (want_weights) w = weights_for_labels(seq.labels, seq.task, spec.no_anchor_weight);
        for (int t = 0; t < t_len; ++t) {
            c.y.at(bi, t) = seq.labels[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
            c.reduce.at(bi, t) = norm;
            if (want_weights) c.reduce_w.at(bi, t) = norm * w.weights[static_cast<std::size_t>(t)];
        }
    }
    return c;
}

Tensor ew_flip(const Tensor& y) {  // 1-y; padded frames are masked by reduce anyway
    Tensor out = Tensor::zeros(y.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - y[i];
    return out;
}

}  // namespace

NodeId batch_sequence_loss(Tape& tape, const std::vector<const LabeledSequence*>& batch,
                           NodeId scores, const LossSpec& spec) {
    spec.validate();
    const Tensor& vs = tape.value(scores);
    if (vs.rank() != 2 || vs.dim(0) != static_cast<int>(batch.size())) {
        throw ShapeError("batch_sequence_loss: scores " + vs.shape_str() + " vs batch of " +
                         std::to_string(batch.size()));
    }
    const int t_max = vs.dim(1);
    const bool want_weights = spec.kind == LossKind::SAL || spec.kind == LossKind::SA_PLUS_FL ||
                              spec.kind == LossKind::SAFL;
    BatchCoeffs c = make_coeffs(batch, t_max, spec, want_weights);
    Tensor ones_minus_y = ew_flip(c.y);

    NodeId p = tape.clamp(scores, kProbEps, 1.0 - kProbEps);
    NodeId log_p = tape.log(p);
    NodeId log_q = tape.log(tape.rsub_scalar(1.0, p));

    auto ce_mat = [&]() {
        return weighted_ce(tape, p, log_p, log_q, c.y, ones_minus_y, 0.0);
    };
    auto focal_mat = [&]() {
        Tensor c_pos = c.y, c_neg = ones_minus_y;
        for (std::size_t i = 0; i < c_pos.size(); ++i) {
            c_pos[i] *= spec.alpha;
            c_neg[i] *= 1.0 - spec.alpha;
        }
        return weighted_ce(tape, p, log_p, log_q, std::move(c_pos), std::move(c_neg), spec.gamma);
    };

    switch (spec.kind) {
        case LossKind::FCEL: return tape.dot_const(ce_mat(), std::move(c.reduce));
        case LossKind::FFL: return tape.dot_const(focal_mat(), std::move(c.reduce));
        case LossKind::SAL: return tape.dot_const(ce_mat(), std::move(c.reduce_w));
        case LossKind::SAFL: return tape.dot_const(focal_mat(), std::move(c.reduce_w));
        case LossKind::SA_PLUS_FL: {
            // Built literally as SAL + FFL so the additive identity holds bit for bit.
            NodeId sal = tape.dot_const(ce_mat(), std::move(c.reduce_w));
            NodeId ffl_node = tape.dot_const(focal_mat(), std::move(c.reduce));
            return tape.add(sal, ffl_node);
        }
    }
    throw ConfigError("batch_sequence_loss: unknown loss kind");
}

NodeId sequence_loss(Tape& tape, const LabeledSequence& seq, NodeId scores, const LossSpec& spec) {
    const Tensor& vs = tape.value(scores);
    if (vs.rank() != 1 || vs.dim(0) != seq.frames()) {
        throw ShapeError("sequence_loss: scores " + vs.shape_str() + " vs sequence of " +
                         std::to_string(seq.frames()) + " frames");
    }
    NodeId as_row = tape.reshape(scores, {1, seq.frames()});
    std::vector<const LabeledSequence*> batch{&seq};
    return batch_sequence_loss(tape, batch, as_row, spec);
}

}  // namespace astream
