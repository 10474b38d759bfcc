#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "astream/errors.hpp"

namespace astream {

// The three detection tasks. KWS anchors at the end of the event, MTD and
// SOD at its start.
enum class TaskKind { KWS, MTD, SOD };

TaskKind task_from_string(const std::string& s);
std::string to_string(TaskKind task);

// Per-frame loss weights, index 0 <-> frame 1.
struct WeightVector {
    std::vector<double> weights;
};

// Anchor frame (1-based) for a binary label stream, or nullopt when the
// stream has no positive frames. Label streams must contain at most one
// contiguous positive run; a second run throws Error since it would mean
// the generator produced multi-event data.
std::optional<int> extract_anchor(const std::vector<std::uint8_t>& labels, TaskKind task);

// Weight of frame t (1-based, in 1..t_len) given the anchor position.
// With an anchor: (t_len - |anchor - t|) / t_len, peaking at exactly 1.
// Without an anchor every frame gets uniform_weight (default 1).
double anchor_weight(int t, std::optional<int> anchor, int t_len, double uniform_weight = 1.0);

WeightVector weights_for_labels(const std::vector<std::uint8_t>& labels, TaskKind task,
                                double uniform_weight = 1.0);

}  // namespace astream
