#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hns {

/// Single layer of Bernoulli units on a fixed input: H_k ~ Bernoulli(sigmoid(x W + b)_k).
struct ToyBsn {
    std::vector<double> x;  // [inputs]
    std::vector<double> W;  // [inputs, units], row-major
    std::vector<double> b;  // [units]

    std::size_t inputs() const { return x.size(); }
    std::size_t units() const { return b.size(); }
    std::vector<double> probabilities() const;
};

using ToyLoss = std::function<double(std::span<const double> sample)>;

struct ExactGradient {
    double expected_cost = 0.0;
    std::vector<double> dW;  // [inputs, units]
    std::vector<double> db;  // [units]
};

constexpr std::size_t kMaxEnumeratedUnits = 20;

/// E[J] summed over all 2^k outcomes. Throws std::invalid_argument for k > 20.
double exact_expected_cost(const ToyBsn& net, const ToyLoss& loss);

/// Gradient of E[J] w.r.t. W and b by differentiating the finite sum: E[J] is
/// multilinear in the unit probabilities, so dE/dp_k = E[J | H_k=1] - E[J | H_k=0].
ExactGradient exact_expected_gradient(const ToyBsn& net, const ToyLoss& loss);

// ---------------------------------------------------------------------------
// Monte-Carlo verification suite for the binary-unit estimators.

struct EstimatorSuiteConfig {
    std::size_t samples = 200000;
    std::size_t parameter_settings = 5;
    std::uint64_t seed = 2024;
    double sigma_bound = 3.0;          // |MC mean - exact| < bound * standard error
    double min_variance_reduction = 0.20;
    double baseline_decay = 0.99;
    std::size_t baseline_warmup = 100;
};

struct EstimatorCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct EstimatorReport {
    std::vector<EstimatorCheck> checks;
    bool all_passed() const;
};

/// Quadratic cost on three units used by the suite: (1*H1 - 2*H2 + 1.5*H3 - 3)^2.
double toy_quadratic_cost(std::span<const double> sample);

/// Runs: REINFORCE unbiasedness, centered-baseline variance reduction,
/// ST1/ST2 identities, slope-annealing reduction at s=1, BDN surrogate identity.
EstimatorReport run_estimator_suite(const EstimatorSuiteConfig& config);

}  // namespace hns
