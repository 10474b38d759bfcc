#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "astream/data.hpp"
#include "astream/losses.hpp"
#include "astream/models.hpp"

namespace astream {

enum class LrSchedule { Cosine, Constant };

struct TrainConfig {
    int epochs = 12;
    int batch_size = 32;
    double lr0 = 0.005;
    LrSchedule schedule = LrSchedule::Cosine;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;
    LossSpec loss;
    TaskKind task = TaskKind::KWS;

    void validate() const;
};

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(int step, int total_steps, double lr0);

// First/second moment state, parallel to the parameter list.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;

    static AdamState init(const std::vector<NamedParam>& params);
};

// In-place bias-corrected Adam update. Throws TrainError naming the parameter
// if a gradient is non-finite.
void adam_step(std::vector<NamedParam>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_auc = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // 0-based epoch with the highest validation AUC

    std::string to_table() const;  // tab-delimited, one row per epoch
};

struct TrainResult {
    StreamingModel model;  // parameters of the best-validation-AUC epoch
    TrainHistory history;
    bool diverged = false;
    std::string diverged_message;
};

// Deterministic training run over the dataset's train split, validated per
// epoch on the validation split. On divergence (non-finite loss or gradient)
// training stops and the result carries the last finished epoch's best model
// with diverged set.
TrainResult train(const Dataset& dataset, StreamingModel model, const TrainConfig& config);

}  // namespace astream
