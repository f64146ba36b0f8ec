#pragma once

#include "hns/data.hpp"
#include "hns/metrics.hpp"
#include "hns/models.hpp"
#include "hns/optim.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace hns {

struct JointLoss {
    Tensor<Real> J;
    Tensor<Real> J_clf;
    Tensor<Real> J_mask;
};

/// J = alpha * CE(logits, targets) + (1 - alpha) * mean fraction of mask pixels passed.
/// Throws std::invalid_argument for a non-binary mask or alpha outside [0,1].
JointLoss joint_loss(const Tensor<Real>& logits, std::span<const int> targets, const Tensor<Real>& mask,
                     double alpha);

/// Per-sample J_n = alpha * CE_n + (1 - alpha) * passed_n; no graph recorded.
std::vector<Real> per_sample_cost(const Tensor<Real>& logits, std::span<const int> targets,
                                  const Tensor<Real>& mask, double alpha);

struct AlphaConfig {
    bool adaptive = true;
    double initial = 1.0;
    double delta = 0.05;
    double floor = 0.01;
    double tolerance = 0.10;
    std::size_t queue = 100;
    /// When true the queue receives the running mean of the classification
    /// loss since the last flush; when false, raw per-batch losses.
    bool running_mean = true;

    void validate() const;
};

/// Lowers alpha by `delta` (down to `floor`) once the queue is full and every
/// entry lies within `tolerance * mean` of the queue mean. Each drop flushes
/// the queue and fires the drop callback so the caller can store weights.
class AdaptiveAlpha {
public:
    using DropCallback = std::function<void(double new_alpha)>;

    explicit AdaptiveAlpha(AlphaConfig config = {});

    /// Pushes one classification loss; returns true if this push triggered a drop.
    bool update(double clf_loss);

    double alpha() const { return alpha_; }
    const AlphaConfig& config() const { return config_; }
    const std::deque<double>& queue() const { return queue_; }
    std::size_t drops() const { return drops_; }
    double running_sum() const { return running_sum_; }
    std::size_t running_count() const { return running_count_; }
    void on_drop(DropCallback cb) { on_drop_ = std::move(cb); }

    /// True when the queue is full and stable; exposed for tests.
    static bool is_stable(const std::deque<double>& queue, std::size_t capacity, double tolerance);

    void restore(double alpha, std::deque<double> queue, std::size_t drops, double running_sum,
                 std::size_t running_count);

private:
    AlphaConfig config_;
    double alpha_;
    std::deque<double> queue_;
    std::size_t drops_ = 0;
    double running_sum_ = 0.0;
    std::size_t running_count_ = 0;
    DropCallback on_drop_;
};

class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PretrainConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 64;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
};

using EpochLog = std::function<void(std::size_t epoch, double loss, double metric)>;

struct HiderPretrainResult {
    std::vector<double> epoch_mse;  // mean training MSE per epoch
    double final_mse = 0.0;         // MSE on the evaluation set after training
};

/// Reconstruction pretraining of the hider's continuous output (binary layer
/// bypassed). Target is the input, or its grayscale for RGB inputs.
HiderPretrainResult pretrain_hider(Hider& hider, const Dataset& train, const Dataset& eval,
                                   const PretrainConfig& config, const EpochLog& log = {});

struct SeekerPretrainResult {
    std::vector<double> epoch_loss;
    double accuracy = 0.0;  // test accuracy after training: the fidelity baseline
};

SeekerPretrainResult pretrain_seeker(Seeker& seeker, const Dataset& train, const Dataset& test,
                                     const PretrainConfig& config, const EpochLog& log = {});

/// Mean squared error of the hider's continuous output against its target.
double reconstruction_mse(const Hider& hider, const Dataset& ds, std::size_t batch_size = 256);

/// Top-1 accuracy of the seeker on unmasked images.
double seeker_accuracy(const Seeker& seeker, const Dataset& ds, std::size_t batch_size = 256);

struct Evaluation {
    double accuracy = 0.0;
    double interpretability = 0.0;
};

/// Masked-model accuracy and mean interpretability over a dataset. In
/// stochastic mode masks are sampled from a noise stream seeded by `noise_seed`.
Evaluation evaluate(HnsModel& model, const Dataset& ds, std::uint64_t noise_seed = 0,
                    std::size_t batch_size = 256);

struct TrainConfig {
    std::size_t batch_size = 64;
    OptimizerConfig optimizer;
    AlphaConfig alpha;
    std::uint64_t seed = 0;
};

/// Owns optimizer and schedule state for one joint training run.
class Trainer {
public:
    Trainer(HnsModel& model, const Dataset& train, const Dataset& test, double baseline_accuracy,
            TrainConfig config);

    /// One pass over the training set followed by test evaluation. Throws
    /// TrainingAborted on a non-finite loss.
    EpochRecord train_epoch();

    const std::vector<EpochRecord>& history() const { return history_; }
    std::size_t epoch() const { return history_.size(); }
    std::uint64_t updates() const { return updates_; }
    AdaptiveAlpha& alpha() { return alpha_; }
    const AdaptiveAlpha& alpha() const { return alpha_; }
    Optimizer<Real>& hider_optimizer() { return hider_opt_; }
    Optimizer<Real>& seeker_optimizer() { return seeker_opt_; }

    /// Parameter values stored at the most recent alpha drop (empty before the first).
    const std::vector<std::vector<float>>& snapshot() const { return snapshot_; }
    std::size_t snapshot_count() const { return snapshot_count_; }
    /// If set, every alpha drop also writes the stored weights to this file.
    void set_snapshot_path(std::filesystem::path path) { snapshot_path_ = std::move(path); }

    /// Writes weights + optimizer moments to `path` and the remaining state to
    /// `path` + ".state.json".
    void save(const std::filesystem::path& path) const;
    /// Inverse of save(); the model must have the same architecture.
    void restore(const std::filesystem::path& path);

private:
    void take_snapshot();

    HnsModel& model_;
    const Dataset& train_;
    const Dataset& test_;
    double baseline_;
    TrainConfig config_;
    Optimizer<Real> hider_opt_;
    Optimizer<Real> seeker_opt_;
    AdaptiveAlpha alpha_;
    std::vector<EpochRecord> history_;
    std::uint64_t updates_ = 0;
    std::vector<std::vector<float>> snapshot_;
    std::size_t snapshot_count_ = 0;
    std::filesystem::path snapshot_path_;
};

}  // namespace hns
