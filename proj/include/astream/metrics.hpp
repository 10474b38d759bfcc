#pragma once

#include <optional>
#include <string>
#include <vector>

#include "astream/data.hpp"
#include "astream/models.hpp"

namespace astream {

// One scored session: a whole sequence reduced to its max frame score, the
// first threshold crossing (when a threshold has been applied), and the
// ground-truth anchor frame for positives.
struct SessionResult {
    std::string id;
    bool label = false;
    double score = 0.0;                      // max frame score across the session
    std::optional<int> first_cross;          // 1-based; set by session_decision
    std::optional<int> gt_event_frame;       // task anchor, 1-based
    std::vector<double> frame_scores;
};

// Probability that a random positive outscores a random negative; ties count
// half. Sort-based O(n log n), exactly equal to pairwise counting.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Decision {
    bool positive = false;
    std::optional<int> first_cross;  // 1-based
};

// Positive iff any frame score strictly exceeds the threshold.
Decision session_decision(const std::vector<double>& frame_scores, double threshold);

// Smallest threshold whose FPR over the negative validation sessions is
// <= target. Throws when no threshold below 1.0 achieves the target.
double tune_threshold(const std::vector<SessionResult>& val_sessions, double target_fpr);

// Fraction of ground-truth-positive sessions that never fire at the threshold.
double fnr_at_threshold(const std::vector<SessionResult>& test_sessions, double threshold);

// |first crossing - anchor| in seconds; nullopt when the session never fired.
// Only meaningful for ground-truth positives.
std::optional<double> detection_latency(const SessionResult& session, double frame_period_ms);

struct LatencyStats {
    double mean = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0;
};

// Mean plus linear-interpolated quantiles.
LatencyStats latency_stats(std::vector<double> latencies);

// Mean squared error between session labels and session max scores.
double brier(const std::vector<double>& session_scores, const std::vector<int>& session_labels);

// ---- full evaluation pipeline ----

struct EvalReport {
    double auc = 0.0;
    double threshold = 0.0;
    double fnr_at_target_fpr = 0.0;
    double brier = 0.0;
    bool has_latency = false;  // false when no positive session fired
    LatencyStats latency;      // seconds
};

// Scores every sequence of a split; parallel across sequences, assembled in
// index order.
std::vector<SessionResult> score_split(const StreamingModel& model, const Dataset& dataset,
                                       Split split, TaskKind task);

// Threshold tuned on the validation split, metric battery on the test split.
EvalReport evaluate_model(const StreamingModel& model, const Dataset& dataset, TaskKind task,
                          double target_fpr);

}  // namespace astream
