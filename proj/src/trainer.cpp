#include "astream/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "astream/metrics.hpp"
#include "astream/rng.hpp"

namespace astream {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("train.beta1/beta2 must be in [0,1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train.eps must be > 0");
    loss.validate();
}

double cosine_lr(int step, int total_steps, double lr0) {
    if (total_steps < 1) throw Error("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) {
        throw Error("cosine_lr: step " + std::to_string(step) + " outside 0.." +
                    std::to_string(total_steps));
    }
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                                       static_cast<double>(total_steps)));
}

AdamState AdamState::init(const std::vector<NamedParam>& params) {
    AdamState s;
    for (const NamedParam& p : params) {
        s.m.push_back(Tensor::zeros(p.value.shape()));
        s.v.push_back(Tensor::zeros(p.value.shape()));
    }
    return s;
}

void adam_step(std::vector<NamedParam>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    if (grads.size() != params.size() || state.m.size() != params.size()) {
        throw Error("adam_step: parameter/gradient/state lists disagree");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi].value;
        const Tensor& g = grads[pi];
        if (!p.same_shape(g)) {
            throw Error("adam_step: gradient shape " + g.shape_str() + " for parameter '" +
                        params[pi].name + "' " + p.shape_str());
        }
        if (!g.all_finite()) {
            throw TrainError("adam_step: non-finite gradient for parameter '" + params[pi].name + "'");
        }
        Tensor& m = state.m[pi];
        Tensor& v = state.v[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::string TrainHistory::to_table() const {
    std::ostringstream os;
    os << "epoch\ttrain_loss\tval_loss\tval_auc\tlr\n";
    char buf[160];
    for (std::size_t e = 0; e < epochs.size(); ++e) {
        const EpochStats& s = epochs[e];
        std::snprintf(buf, sizeof buf, "%zu\t%.12g\t%.12g\t%.12g\t%.12g\n", e + 1, s.train_loss,
                      s.val_loss, s.val_auc, s.lr);
        os << buf;
    }
    os << "# best_epoch\t" << best_epoch + 1 << "\n";
    return os.str();
}

namespace {

// Mean frame loss of one sequence given inference-mode scores; used for the
// per-epoch validation loss without building a tape.
double scalar_sequence_loss(const LabeledSequence& seq, const std::vector<double>& scores,
                            const LossSpec& spec) {
    const WeightVector w = weights_for_labels(seq.labels, seq.task, spec.no_anchor_weight);
    double sum = 0.0;
    for (std::size_t t = 0; t < scores.size(); ++t) {
        sum += frame_loss(seq.labels[t], scores[t], w.weights[t], spec);
    }
    return sum / static_cast<double>(scores.size());
}

struct ValScore {
    double loss = 0.0;
    double auc = 0.5;
};

ValScore validate_epoch(const StreamingModel& model, const std::vector<const LabeledSequence*>& val,
                        const LossSpec& spec) {
    std::vector<double> losses(val.size(), 0.0);
    std::vector<double> session_scores(val.size(), 0.0);
    std::vector<int> session_labels(val.size(), 0);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(val.size()); ++i) {
        const LabeledSequence& seq = *val[static_cast<std::size_t>(i)];
        const std::vector<double> scores = model.score_sequence(seq.features);
        losses[static_cast<std::size_t>(i)] = scalar_sequence_loss(seq, scores, spec);
        session_scores[static_cast<std::size_t>(i)] = *std::max_element(scores.begin(), scores.end());
        session_labels[static_cast<std::size_t>(i)] = seq.is_positive() ? 1 : 0;
    }
    ValScore v;
    for (double l : losses) v.loss += l;
    v.loss /= static_cast<double>(val.size());
    v.auc = auc_roc(session_scores, session_labels);
    return v;
}

Tensor pack_batch(const std::vector<const LabeledSequence*>& batch, int t_max, int d) {
    Tensor x = Tensor::zeros({static_cast<int>(batch.size()), t_max, d});
    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const Tensor& f = batch[bi]->features;
        std::copy(f.data(), f.data() + f.size(),
                  x.data() + bi * static_cast<std::size_t>(t_max) * d);
    }
    return x;
}

std::vector<Tensor> snapshot(const StreamingModel& model) {
    std::vector<Tensor> copy;
    for (const NamedParam& p : model.params()) copy.push_back(p.value);
    return copy;
}

void restore(StreamingModel& model, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < snap.size(); ++i) model.params()[i].value = snap[i];
}

}  // namespace

TrainResult train(const Dataset& dataset, StreamingModel model, const TrainConfig& config) {
    config.validate();
    const std::vector<const LabeledSequence*> train_seqs = dataset.split_view(Split::Train);
    const std::vector<const LabeledSequence*> val_seqs = dataset.split_view(Split::Validation);
    if (train_seqs.empty()) throw Error("train: dataset has no train split");
    if (val_seqs.empty()) throw Error("train: dataset has no validation split");
    const int d = model.config().input_dim;
    for (const LabeledSequence* s : train_seqs) {
        if (s->feature_dim() != d) {
            throw ShapeError("train: sequence '" + s->id + "' has feature dim " +
                             std::to_string(s->feature_dim()) + ", model expects " + std::to_string(d));
        }
    }

    const int n_train = static_cast<int>(train_seqs.size());
    const int steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
    const int total_steps = steps_per_epoch * config.epochs;

    TrainResult result{std::move(model), {}, false, {}};
    AdamState adam = AdamState::init(result.model.params());
    std::vector<int> order(train_seqs.size());
    for (int i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;

    std::vector<Tensor> best_params = snapshot(result.model);
    double best_auc = -1.0;
    int global_step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(mix_seed(config.seed, "epoch-shuffle"), static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        double epoch_lr0 = 0.0;
        int batches = 0;
        try {
            for (int start = 0; start < n_train; start += config.batch_size) {
                const int end = std::min(n_train, start + config.batch_size);
                std::vector<const LabeledSequence*> batch;
                int t_max = 0;
                for (int i = start; i < end; ++i) {
                    const LabeledSequence* s = train_seqs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
                    batch.push_back(s);
                    t_max = std::max(t_max, s->frames());
                }
                const double lr = config.schedule == LrSchedule::Cosine
                                      ? cosine_lr(global_step, total_steps, config.lr0)
                                      : config.lr0;
                if (batches == 0) epoch_lr0 = lr;

                Tape tape;
                const std::vector<NodeId> bound = result.model.bind(tape, true);
                const NodeId x = tape.constant(pack_batch(batch, t_max, d));
                const NodeId probs = result.model.forward(
                    tape, bound, x, true, mix_seed(config.seed, 1000003ull * static_cast<std::uint64_t>(global_step)));
                const NodeId loss = batch_sequence_loss(tape, batch, probs, config.loss);
                const double loss_value = tape.value(loss)[0];
                if (!std::isfinite(loss_value)) {
                    throw TrainError("loss is non-finite");
                }
                tape.backward(loss);

                std::vector<Tensor> grads;
                grads.reserve(bound.size());
                for (NodeId id : bound) grads.push_back(tape.grad(id));
                adam_step(result.model.params(), grads, adam, lr, config.beta1, config.beta2, config.eps);

                epoch_loss += loss_value;
                ++batches;
                ++global_step;
            }
        } catch (const Error& e) {
            result.diverged = true;
            result.diverged_message = "training diverged at epoch " + std::to_string(epoch + 1) +
                                      ", step " + std::to_string(global_step + 1) + ": " + e.what();
            break;
        }

        const ValScore val = validate_epoch(result.model, val_seqs, config.loss);
        EpochStats stats;
        stats.train_loss = epoch_loss / std::max(1, batches);
        stats.val_loss = val.loss;
        stats.val_auc = val.auc;
        stats.lr = epoch_lr0;
        result.history.epochs.push_back(stats);
        if (val.auc > best_auc) {
            best_auc = val.auc;
            best_params = snapshot(result.model);
            result.history.best_epoch = epoch;
        }
    }

    restore(result.model, best_params);
    return result;
}

}  // namespace astream
