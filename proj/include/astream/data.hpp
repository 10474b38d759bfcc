#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "astream/sequence.hpp"

namespace astream {

// Synthetic streaming-event generator. Positive sequences embed exactly one
// event: a task-specific feature pattern over a contiguous span with labels 1
// on the span. Negatives are noise, optionally with a distractor pattern that
// shares the event's ambiguous prefix but not its discriminative part, so the
// detection problem is non-trivial. Everything is a pure function of (seed,
// sequence index); generation order and worker count do not matter.
struct GenConfig {
    TaskKind task = TaskKind::KWS;
    int n_sequences = 2860;
    double positive_fraction = 0.5;
    int t_min = 120;
    int t_max = 200;
    int event_min = 40;
    int event_max = 70;
    double noise_level = 0.7;
    double event_strength = 1.0;
    // Fraction of negative sequences that carry a distractor pattern.
    double distractor_fraction = 0.6;
    // Events stay at least this many frames away from both sequence edges.
    int boundary_margin = 12;
    // Required gap between mean feature energy inside and outside events;
    // checked statistically by the test-suite, not per sequence.
    double energy_margin = 0.05;
    double frame_period_ms = 10.0;
    std::uint64_t seed = 1;

    int feature_dim() const;
    static GenConfig defaults(TaskKind task);
    void validate() const;
};

struct Dataset {
    std::vector<LabeledSequence> sequences;

    std::vector<const LabeledSequence*> split_view(Split s) const;
    int count(Split s) const;
    int positives(Split s) const;
};

Dataset generate(const GenConfig& config);

// Deterministic stratified split tagging: exact per-split totals (largest
// remainder), class balance as close as integers allow. Ratios must sum to 1.
void split_dataset(Dataset& dataset, double train_ratio, double val_ratio, double test_ratio,
                   std::uint64_t seed);

// On-disk layout under `dir`: manifest.tsv (one line per sequence: id, split,
// task, T, D, frame_period_ms, byte offset) plus sequences.bin ("ASEQ", u32 T,
// u32 D, f32 LE features row-major, u8 labels, per sequence). Features are
// quantized to f32 at generation time, so round-trips are bit-exact.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace astream
