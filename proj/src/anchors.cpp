#include "astream/anchors.hpp"

namespace astream {

TaskKind task_from_string(const std::string& s) {
    if (s == "kws") return TaskKind::KWS;
    if (s == "mtd") return TaskKind::MTD;
    if (s == "sod") return TaskKind::SOD;
    throw ConfigError("unknown task '" + s + "' (expected kws, mtd, or sod)");
}

std::string to_string(TaskKind task) {
    switch (task) {
        case TaskKind::KWS: return "kws";
        case TaskKind::MTD: return "mtd";
        case TaskKind::SOD: return "sod";
    }
    return "?";
}

std::optional<int> extract_anchor(const std::vector<std::uint8_t>& labels, TaskKind task) {
    if (labels.empty()) throw Error("extract_anchor: empty label stream");
    int run_start = -1, run_end = -1;  // 0-based, inclusive
    int runs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pos = labels[i] != 0;
        const bool prev = i > 0 && labels[i - 1] != 0;
        if (pos && !prev) {
            ++runs;
            if (runs > 1) {
                throw Error("extract_anchor: label stream has more than one positive run (second run starts at frame " +
                            std::to_string(i + 1) + ")");
            }
            run_start = static_cast<int>(i);
        }
        if (pos) run_end = static_cast<int>(i);
    }
    if (runs == 0) return std::nullopt;
    switch (task) {
        case TaskKind::KWS: return run_end + 1;  // end of keyword, 1-based
        case TaskKind::MTD:
        case TaskKind::SOD: return run_start + 1;  // start of speech/trigger
    }
    return std::nullopt;
}

double anchor_weight(int t, std::optional<int> anchor, int t_len, double uniform_weight) {
    if (t_len < 1) throw Error("anchor_weight: sequence length must be >= 1");
    if (t < 1 || t > t_len) {
        throw Error("anchor_weight: frame " + std::to_string(t) + " out of range 1.." +
                    std::to_string(t_len));
    }
    if (!anchor) return uniform_weight;
    if (*anchor < 1 || *anchor > t_len) {
        throw Error("anchor_weight: anchor " + std::to_string(*anchor) + " out of range 1.." +
                    std::to_string(t_len));
    }
    const int dist = t >= *anchor ? t - *anchor : *anchor - t;
    return static_cast<double>(t_len - dist) / static_cast<double>(t_len);
}

WeightVector weights_for_labels(const std::vector<std::uint8_t>& labels, TaskKind task,
                                double uniform_weight) {
    const std::optional<int> anchor = extract_anchor(labels, task);
    const int t_len = static_cast<int>(labels.size());
    WeightVector w;
    w.weights.resize(labels.size());
    for (int t = 1; t <= t_len; ++t) {
        w.weights[static_cast<std::size_t>(t - 1)] = anchor_weight(t, anchor, t_len, uniform_weight);
    }
    return w;
}

}  // namespace astream
