#pragma once

#include "hns/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hns {

/// Mean over the batch of the fraction of zeros in each mask. Accepts any
/// tensor whose first axis is the batch. Throws std::invalid_argument if a
/// value is neither 0 nor 1.
template <typename T>
double interpretability(const Tensor<T>& masks);

/// Mean over the batch of the fraction of ones (pixels passed).
template <typename T>
double fraction_passed(const Tensor<T>& masks);

/// Interpretability from a count: hidden / total.
double interpretability(std::size_t hidden, std::size_t total);

/// P / P_base, unclamped. Throws std::invalid_argument for P_base <= 0.
double fidelity(double accuracy, double baseline_accuracy);

/// Fidelity clamped to [0, 1.5] for summary tables.
double fidelity_for_report(double fidelity);

/// F / (F + I); empty when F + I == 0.
std::optional<double> fir(double f, double i);

double fii(double f, double i);

enum class Collapse { none, fidelity_collapse, interpretability_collapse };

std::string to_string(Collapse c);

constexpr double kCollapseThreshold = 0.20;
constexpr double kOptimalThreshold = 0.90;

/// Fidelity collapse takes precedence when both metrics are below 20%.
Collapse detect_collapse(double fidelity, double interpretability);
bool is_optimal(double fidelity, double interpretability);

struct EpochRecord {
    std::size_t epoch = 0;
    double alpha = 1.0;
    double slope = 1.0;
    double J = 0.0;
    double J_clf = 0.0;
    double J_mask = 0.0;
    double accuracy = 0.0;
    double fidelity = 0.0;
    double interpretability = 0.0;
    std::optional<double> fir;
    double fii = 0.0;
};

/// Builds the derived columns (fidelity, fir, fii) of a record.
EpochRecord make_epoch_record(std::size_t epoch, double alpha, double slope, double J, double J_clf,
                              double J_mask, double accuracy, double interpretability,
                              double baseline_accuracy);

struct RunMetrics {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    bool failed = false;  // aborted (e.g. non-finite loss)
    std::string failure;

    /// Record reported as the run's result: the last epoch.
    const EpochRecord& final_record() const;
    Collapse collapse() const;
    bool optimal() const;
    /// First epoch (1-based, as stored) where is_optimal holds.
    std::optional<std::size_t> convergence_epoch() const;
};

struct Aggregate {
    double mean = 0.0;
    double peak = 0.0;
    std::size_t count = 0;
};

struct ExperimentSummary {
    std::size_t runs = 0;
    std::size_t failed_runs = 0;
    std::size_t fidelity_collapses = 0;
    std::size_t interpretability_collapses = 0;
    std::size_t optimal_runs = 0;
    // Over non-collapsed, non-failed runs.
    Aggregate fidelity;
    Aggregate interpretability;
    Aggregate fii;
    std::optional<double> mean_fir;
    // Over runs that reached optimality.
    std::optional<double> mean_convergence_epoch;
    std::optional<std::size_t> fastest_convergence_epoch;
    /// Mean over runs of the std of first differences of per-epoch accuracy.
    double intra_model_variance = 0.0;
    /// Std across runs of final accuracy.
    double inter_model_variance = 0.0;
};

/// Throws std::invalid_argument for an empty list.
ExperimentSummary summarize(const std::vector<RunMetrics>& runs);

/// Population standard deviation; 0 for fewer than 2 values.
double standard_deviation(const std::vector<double>& values);

/// Human-readable table with one statistic per row.
std::string format_summary_table(const ExperimentSummary& s);

/// Single-row CSV (header + values).
std::string format_summary_csv(const ExperimentSummary& s);

}  // namespace hns
