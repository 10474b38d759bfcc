#include "astream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace astream {

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw Error("auc_roc: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(labels.size()) + " labels");
    }
    std::size_t pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg) += 1;
    if (pos == 0 || neg == 0) {
        throw Error("auc_roc: need at least one positive and one negative session");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of average ranks of the positives (ties share their rank block).
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]]) pos_rank_sum += avg_rank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

Decision session_decision(const std::vector<double>& frame_scores, double threshold) {
    Decision d;
    for (std::size_t t = 0; t < frame_scores.size(); ++t) {
        if (frame_scores[t] > threshold) {
            d.positive = true;
            d.first_cross = static_cast<int>(t) + 1;
            break;
        }
    }
    return d;
}

double tune_threshold(const std::vector<SessionResult>& val_sessions, double target_fpr) {
    if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) {
        throw Error("tune_threshold: target FPR must be in [0,1]");
    }
    std::vector<double> neg_scores;
    for (const SessionResult& s : val_sessions) {
        if (!s.label) neg_scores.push_back(s.score);
    }
    if (neg_scores.empty()) throw Error("tune_threshold: validation set has no negative sessions");
    std::sort(neg_scores.begin(), neg_scores.end(), std::greater<double>());

    const int allowed = static_cast<int>(std::floor(target_fpr * static_cast<double>(neg_scores.size())));
    const double threshold =
        allowed < static_cast<int>(neg_scores.size()) ? neg_scores[static_cast<std::size_t>(allowed)] : 0.0;
    if (threshold >= 1.0) {
        throw Error("tune_threshold: target FPR " + std::to_string(target_fpr) +
                    " unattainable: required threshold reaches 1.0, nothing can fire");
    }
    return threshold;
}

double fnr_at_threshold(const std::vector<SessionResult>& test_sessions, double threshold) {
    std::size_t pos = 0, missed = 0;
    for (const SessionResult& s : test_sessions) {
        if (!s.label) continue;
        ++pos;
        if (!(s.score > threshold)) ++missed;
    }
    if (pos == 0) throw Error("fnr_at_threshold: test set has no positive sessions");
    return static_cast<double>(missed) / static_cast<double>(pos);
}

std::optional<double> detection_latency(const SessionResult& session, double frame_period_ms) {
    if (!session.label) {
        throw Error("detection_latency: session '" + session.id + "' is ground-truth negative");
    }
    if (!session.gt_event_frame) {
        throw Error("detection_latency: session '" + session.id + "' has no anchor frame");
    }
    if (!session.first_cross) return std::nullopt;
    const int diff = *session.first_cross - *session.gt_event_frame;
    return std::abs(diff) * frame_period_ms / 1000.0;
}

namespace {

double quantile_sorted(const std::vector<double>& xs, double q) {
    const double h = (static_cast<double>(xs.size()) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
    return xs[lo] + (h - std::floor(h)) * (xs[hi] - xs[lo]);
}

}  // namespace

LatencyStats latency_stats(std::vector<double> latencies) {
    if (latencies.empty()) throw Error("latency_stats: empty latency list");
    std::sort(latencies.begin(), latencies.end());
    LatencyStats s;
    double sum = 0.0;
    for (double v : latencies) sum += v;
    s.mean = sum / static_cast<double>(latencies.size());
    s.p25 = quantile_sorted(latencies, 0.25);
    s.p50 = quantile_sorted(latencies, 0.50);
    s.p75 = quantile_sorted(latencies, 0.75);
    return s;
}

double brier(const std::vector<double>& session_scores, const std::vector<int>& session_labels) {
    if (session_scores.size() != session_labels.size() || session_scores.empty()) {
        throw Error("brier: need matching, nonempty score/label lists");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < session_scores.size(); ++i) {
        const double d = static_cast<double>(session_labels[i]) - session_scores[i];
        sum += d * d;
    }
    return sum / static_cast<double>(session_scores.size());
}

// --------------------------------------------------------------------------
// Pipeline
// --------------------------------------------------------------------------

std::vector<SessionResult> score_split(const StreamingModel& model, const Dataset& dataset,
                                       Split split, TaskKind task) {
    const std::vector<const LabeledSequence*> view = dataset.split_view(split);
    std::vector<SessionResult> out(view.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(view.size()); ++i) {
        const LabeledSequence& seq = *view[static_cast<std::size_t>(i)];
        SessionResult s;
        s.id = seq.id;
        s.label = seq.is_positive();
        s.frame_scores = model.score_sequence(seq.features);
        s.score = *std::max_element(s.frame_scores.begin(), s.frame_scores.end());
        s.gt_event_frame = extract_anchor(seq.labels, task);
        out[static_cast<std::size_t>(i)] = std::move(s);
    }
    return out;
}

EvalReport evaluate_model(const StreamingModel& model, const Dataset& dataset, TaskKind task,
                          double target_fpr) {
    const std::vector<SessionResult> val = score_split(model, dataset, Split::Validation, task);
    std::vector<SessionResult> test = score_split(model, dataset, Split::Test, task);

    EvalReport r;
    r.threshold = tune_threshold(val, target_fpr);

    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<double> latencies;
    for (SessionResult& s : test) {
        scores.push_back(s.score);
        labels.push_back(s.label ? 1 : 0);
        const Decision d = session_decision(s.frame_scores, r.threshold);
        s.first_cross = d.first_cross;
    }
    const std::vector<const LabeledSequence*> test_view = dataset.split_view(Split::Test);
    const double period_ms = test_view.empty() ? 10.0 : test_view.front()->frame_period_ms;
    for (const SessionResult& s : test) {
        if (!s.label) continue;
        if (const std::optional<double> lat = detection_latency(s, period_ms)) {
            latencies.push_back(*lat);
        }
    }

    r.auc = auc_roc(scores, labels);
    r.fnr_at_target_fpr = fnr_at_threshold(test, r.threshold);
    r.brier = brier(scores, labels);
    if (!latencies.empty()) {
        r.has_latency = true;
        r.latency = latency_stats(latencies);
    }
    return r;
}

}  // namespace astream
