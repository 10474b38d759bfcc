#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "astream/anchors.hpp"
#include "astream/tensor.hpp"

namespace astream {

enum class Split { Train, Validation, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// One streaming datapoint: T frames of D features with aligned binary
// labels. Labels hold at most one contiguous positive run.
struct LabeledSequence {
    Tensor features;                   // [T, D]
    std::vector<std::uint8_t> labels;  // length T, values 0/1
    double frame_period_ms = 10.0;
    TaskKind task = TaskKind::KWS;
    std::string id;
    Split split = Split::Train;

    int frames() const { return features.rank() == 2 ? features.dim(0) : 0; }
    int feature_dim() const { return features.rank() == 2 ? features.dim(1) : 0; }
    bool is_positive() const {
        for (std::uint8_t l : labels) {
            if (l) return true;
        }
        return false;
    }
};

}  // namespace astream
