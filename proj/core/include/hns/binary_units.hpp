#pragma once

#include "hns/surrogate.hpp"
#include "hns/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hns {

enum class ThresholdMode { deterministic, stochastic };

enum class Estimator {
    identity_st_bdn,
    st1,
    st2,
    slope_anneal,
    reinforce_uncentered,
    reinforce_centered,
};

ThresholdMode parse_threshold_mode(const std::string& name);
std::string to_string(ThresholdMode mode);
Estimator parse_estimator(const std::string& name);
std::string to_string(Estimator estimator);
bool is_reinforce(Estimator estimator);

struct BinaryLayerConfig {
    ThresholdMode mode = ThresholdMode::deterministic;
    Estimator estimator = Estimator::identity_st_bdn;
    double tau = 0.5;
    double slope = 1.0;
    double anneal_rate = 0.0;
    double slope_max = 1e3;
    double baseline_decay = 0.99;
    std::size_t baseline_warmup = 100;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument on an inconsistent mode/estimator pair or
    /// out-of-range numbers.
    void validate() const;
};

/// Counter-based uniform stream (SplitMix64). Its whole state is
/// (seed, counter), so it can be checkpointed and resumed exactly.
class NoiseSource {
public:
    explicit NoiseSource(std::uint64_t seed = 0) : seed_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t counter) { counter_ = counter; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

/// 1 where z >= tau, else 0. Not differentiable; records no graph.
template <typename T>
Tensor<T> step_threshold(const Tensor<T>& z, T tau);

/// 1 where u < z with u ~ U[0,1) drawn once per unit, i.e. H(z - u).
/// Throws std::domain_error if any z lies outside [0,1].
template <typename T>
Tensor<T> stochastic_threshold(const Tensor<T>& z, NoiseSource& noise);

/// H(sigmoid(x W + b)) with the identity surrogate for H in the backward pass.
template <typename T>
Tensor<T> bdn_forward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b, T tau);

/// Result of a stochastic binary unit forward pass. `probability` holds
/// sigmoid(s*h) and `preactivation` holds h, both flattened like `output`.
template <typename T>
struct BsnSample {
    Tensor<T> output;
    std::vector<T> probability;
    std::vector<T> preactivation;
    double slope = 1.0;
};

template <typename T>
BsnSample<T> bsn_forward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b,
                         const BinaryLayerConfig& cfg, NoiseSource& noise);

/// Parameter gradients of an affine unit h = x W + b.
template <typename T>
struct AffineGrads {
    std::vector<T> dW;
    std::vector<T> db;
};

/// Chains per-unit dJ/dh [N,O] into dJ/dW [I,O] and dJ/db [O], summed over the batch.
template <typename T>
AffineGrads<T> chain_affine(std::span<const T> dh, const Tensor<T>& x);

/// Straight-through, keeping the sigmoid derivative: upstream * s(1-s) * x.
template <typename T>
AffineGrads<T> grad_st1(std::span<const T> upstream, std::span<const T> sigma, const Tensor<T>& x);

/// Straight-through, ignoring the sigmoid as well: upstream * x.
template <typename T>
AffineGrads<T> grad_st2(std::span<const T> upstream, const Tensor<T>& x);

/// Slope-annealed straight-through: upstream * s * sigma_s(1-sigma_s) * x,
/// where sigma_s = sigmoid(s*h). Throws std::domain_error for s < 1.
template <typename T>
AffineGrads<T> grad_slope_anneal(std::span<const T> upstream, std::span<const T> sigma_s,
                                 const Tensor<T>& x, T slope);

/// Slope after one weight update when the slope grows by (1 + rate) per
/// `updates_per_epoch` updates.
double anneal_slope(double slope, double rate, std::size_t updates_per_epoch);

/// Per-unit score-function signal J_n * (H - sigma), shaped like H ([N, units]).
template <typename T>
std::vector<T> grad_reinforce_uncentered(std::span<const T> cost, std::span<const T> sample,
                                         std::span<const T> sigma);

/// Per-unit running estimate of E[(H-s)^2 J] / E[(H-s)^2] as exponential
/// moving averages.
class ReinforceBaseline {
public:
    ReinforceBaseline() = default;
    ReinforceBaseline(std::size_t units, double decay, std::size_t warmup);

    std::size_t units() const { return numerator_.size(); }
    std::size_t samples_seen() const { return samples_; }

    /// Baseline for `unit`; 0 during warm-up or while the denominator is 0.
    double value(std::size_t unit) const;

    /// Folds one sample (per-unit sample/probability, scalar cost) into the averages.
    template <typename T>
    void update(std::span<const T> sample, std::span<const T> sigma, double cost);

    std::vector<double>& numerator() { return numerator_; }
    std::vector<double>& denominator() { return denominator_; }
    const std::vector<double>& numerator() const { return numerator_; }
    const std::vector<double>& denominator() const { return denominator_; }
    void set_samples_seen(std::size_t n) { samples_ = n; }
    double decay() const { return decay_; }
    std::size_t warmup() const { return warmup_; }

private:
    std::vector<double> numerator_;
    std::vector<double> denominator_;
    double decay_ = 0.99;
    std::size_t warmup_ = 100;
    std::size_t samples_ = 0;
};

/// (J_n - baseline_u) * (H - sigma). Uses the baseline as it stands, then
/// folds every sample of the batch into it.
template <typename T>
std::vector<T> grad_reinforce_centered(std::span<const T> cost, ReinforceBaseline& baseline,
                                       std::span<const T> sample, std::span<const T> sigma);

/// Binary layer applied to a pre-activation map h. The forward pass produces
/// exact {0,1} values; the backward pass follows the configured estimator.
///
/// For the REINFORCE estimators the upstream gradient is ignored; the caller
/// must hand the realised per-sample costs to set_sample_costs() between the
/// forward and the backward pass.
template <typename T>
class BinaryLayer {
public:
    explicit BinaryLayer(BinaryLayerConfig config);

    Tensor<T> forward(const Tensor<T>& preactivation, NoiseSource* noise = nullptr);

    void set_sample_costs(std::span<const T> costs);

    /// Called after each weight update; grows the slope when annealing.
    void on_update(std::size_t updates_per_epoch);

    const BinaryLayerConfig& config() const { return state_->config; }
    double slope() const { return state_->slope; }
    void set_slope(double slope) { state_->slope = slope; }
    NoiseSource& noise() { return state_->noise; }
    ReinforceBaseline& baseline() { return state_->baseline; }
    const std::string& op_id() const { return op_id_; }

    /// sigmoid(s*h) from the most recent forward pass.
    const std::vector<T>& last_probability() const { return state_->probability; }

private:
    struct State {
        BinaryLayerConfig config;
        double slope = 1.0;
        NoiseSource noise;
        NoiseSource* active_noise = nullptr;
        ReinforceBaseline baseline;
        std::vector<T> probability;
        std::vector<T> costs;
        std::size_t batch = 0;
    };

    std::shared_ptr<State> state_;
    SurrogateRegistry<T> registry_;
    std::string op_id_;
};

extern template class BinaryLayer<float>;
extern template class BinaryLayer<double>;

}  // namespace hns
