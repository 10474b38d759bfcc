#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "astream/anchors.hpp"
#include "astream/tape.hpp"

namespace astream {

enum class ModelKind { KWS_CNN, MTD_GRU, SOD_LSTM };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);
ModelKind model_for_task(TaskKind task);

// Architecture knobs. The defaults hit the parameter/receptive-field targets
// the build() validation enforces; overrides that miss them are rejected
// with the achieved values in the message.
struct ModelConfig {
    ModelKind kind = ModelKind::KWS_CNN;
    int input_dim = 16;
    std::uint64_t seed = 1;

    // KWS_CNN: depthwise kernel size, one dilation per depthwise layer
    // (1 + 3x2 layout), channel width after each group's pointwise block.
    int kernel = 5;
    std::vector<int> dilations = {1, 1, 2, 4, 6, 8, 16};
    std::vector<int> widths = {48, 64, 96};

    // MTD_GRU / SOD_LSTM
    int hidden = 64;
    int dense1 = 32;      // LSTM head bottleneck
    double dropout = 0.0; // applied on dense-layer inputs, LSTM head only

    static ModelConfig defaults(ModelKind kind);

    std::string descriptor() const;                       // single-line key=value form
    static ModelConfig from_descriptor(const std::string& text);
};

struct NamedParam {
    std::string name;
    Tensor value;
};

// Carried state for chunked streaming inference.
struct StreamState {
    std::vector<Tensor> conv_context;  // per depthwise layer: [ctx, C] input history
    Tensor hidden;                     // [H]
    Tensor cell;                       // [H], LSTM only
};

constexpr int kUnboundedReceptiveField = std::numeric_limits<int>::max();

// One of the three frame-wise detectors. Parameters are owned as named
// tensors; a forward pass binds them onto a caller-supplied tape. A model is
// safe to share read-only across evaluation workers; training updates need
// exclusive access.
class StreamingModel {
public:
    static StreamingModel build(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }

    int param_count() const;
    // CNN: analytic 1 + sum (k-1)*d. Recurrent: the sequence length (state
    // reaches all the way back), kUnboundedReceptiveField when unspecified.
    int receptive_field(int sequence_len = kUnboundedReceptiveField) const;

    // Registers every parameter as a tape leaf, in params() order.
    std::vector<NodeId> bind(Tape& tape, bool requires_grad) const;

    // Batched forward: x is [B,T,input_dim], result is [B,T] probabilities.
    // Output at frame t depends only on frames <= t. dropout_seed fixes the
    // dropout masks, so a (seed, input) pair is reproducible bit for bit.
    NodeId forward(Tape& tape, const std::vector<NodeId>& bound, NodeId x, bool training,
                   std::uint64_t dropout_seed) const;

    // Convenience: scores for one [T,D] sequence, inference mode.
    std::vector<double> score_sequence(const Tensor& features) const;

    // Stateful streaming path; concatenated chunk outputs match the
    // full-sequence forward.
    StreamState make_state() const;
    std::vector<double> forward_chunk(StreamState& state, const Tensor& chunk) const;

private:
    ModelConfig config_;
    std::vector<NamedParam> params_;

    const Tensor& param(const std::string& name) const;
    NodeId forward_cnn(Tape& tape, const std::vector<NodeId>& bound, NodeId x) const;
    NodeId forward_gru(Tape& tape, const std::vector<NodeId>& bound, NodeId x) const;
    NodeId forward_lstm(Tape& tape, const std::vector<NodeId>& bound, NodeId x, bool training,
                        std::uint64_t dropout_seed) const;
};

// Checkpoint file: "ASCK" magic, u32 format version, length-prefixed UTF-8
// architecture descriptor, then (name, shape, f64 little-endian values) per
// parameter. Round-trips bit-exactly.
void save_checkpoint(const StreamingModel& model, const std::filesystem::path& path);
StreamingModel load_checkpoint(const std::filesystem::path& path);

}  // namespace astream
