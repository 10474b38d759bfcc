#pragma once

#include <string>
#include <vector>

#include "astream/anchors.hpp"
#include "astream/sequence.hpp"
#include "astream/tape.hpp"

namespace astream {

enum class LossKind { FCEL, FFL, SAL, SA_PLUS_FL, SAFL };

LossKind loss_from_string(const std::string& s);
std::string to_string(LossKind k);

// Which loss to train with, plus the focal parameters. gamma/alpha are
// ignored by FCEL and SAL. no_anchor_weight is the uniform per-frame weight
// applied when a sequence has no event (kept configurable; default 1 keeps
// negative-only sequences at full cross-entropy strength).
struct LossSpec {
    LossKind kind = LossKind::FCEL;
    double gamma = 2.0;
    double alpha = 0.25;
    double no_anchor_weight = 1.0;

    void validate() const;
};

// Probabilities are clamped into [kProbEps, 1-kProbEps] before any log.
constexpr double kProbEps = 1e-6;

inline double clamp_prob(double p) {
    if (p < kProbEps) return kProbEps;
    if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
    return p;
}

// ---- scalar frame-level forms ----

// Binary cross entropy of one frame.
double fcel(int y, double p);

// (1-s)^gamma * log(s); negative for s < 1.
double focal_term(double s, double gamma);

// Focal loss of one frame: -y*alpha*F(p) - (1-y)*(1-alpha)*F(1-p).
double ffl(int y, double p, const LossSpec& spec);

// Dispatch on spec.kind; w is the anchor weight of the frame.
//   FCEL -> fcel          FFL  -> ffl
//   SAL  -> w*fcel        SAFL -> w*ffl       SA+FL -> w*fcel + ffl
double frame_loss(int y, double p, double w, const LossSpec& spec);

// ---- differentiable sequence/batch reductions ----

// Mean frame loss of one sequence; scores is a [T] node on the tape.
NodeId sequence_loss(Tape& tape, const LabeledSequence& seq, NodeId scores, const LossSpec& spec);

// Batched form used by the trainer: scores is [B,Tmax], sequences may be
// shorter than Tmax (padded frames are masked out). Reduction is the mean
// over each sequence's true frames, then the mean over the batch.
NodeId batch_sequence_loss(Tape& tape, const std::vector<const LabeledSequence*>& batch,
                           NodeId scores, const LossSpec& spec);

}  // namespace astream
