#pragma once

#include "hns/config.hpp"
#include "hns/data.hpp"
#include "hns/estimator_oracle.hpp"
#include "hns/metrics.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hns {

struct DataSplit {
    Dataset train;
    Dataset test;
};

/// Loads the configured dataset and draws the stratified train/test subsets.
DataSplit load_experiment_data(const ExperimentConfig& cfg);

enum class PretrainTarget { both, hider, seeker };

struct PretrainReport {
    std::optional<double> baseline_accuracy;
    std::optional<double> hider_mse;
};

/// Writes <pretrain.dir>/hider.ckpt, seeker.ckpt, baseline.json and per-epoch
/// logs (hider_pretrain.csv, seeker_pretrain.csv).
PretrainReport cmd_pretrain(const ExperimentConfig& cfg, PretrainTarget target, std::ostream& log,
                            const DataSplit* data = nullptr);

/// Reads the baseline accuracy recorded by cmd_pretrain.
double read_baseline(const std::filesystem::path& pretrain_dir);

struct TrainReport {
    std::vector<RunMetrics> runs;
    std::vector<std::filesystem::path> run_dirs;
    std::size_t skipped_runs = 0;
    ExperimentSummary summary;
};

/// Executes the configured runs (seeds seed..seed+runs-1) in parallel, each in
/// <output.dir>/run_<i>_seed_<seed>/ with metrics.csv, status.json,
/// final.ckpt and selected.ckpt (weights stored at the latest alpha drop).
/// Writes config.txt, summary.csv and summary.txt to <output.dir>.
TrainReport cmd_train(const ExperimentConfig& cfg, const std::string& effective_config, std::ostream& log,
                      const DataSplit* data = nullptr);

struct EvalReport {
    double accuracy = 0.0;
    double interpretability = 0.0;
    std::optional<double> fidelity;
};

EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log,
                    const DataSplit* data = nullptr);

/// Writes <i>_input, <i>_mask and <i>_masked images (PGM for grayscale, PPM
/// for RGB inputs; the mask is always PGM) for the first n test samples.
/// Throws std::invalid_argument if n exceeds the test subset.
std::vector<std::filesystem::path> cmd_export_masks(const ExperimentConfig& cfg,
                                                    const std::filesystem::path& checkpoint, std::size_t n,
                                                    const std::filesystem::path& out_dir, std::ostream& log,
                                                    const DataSplit* data = nullptr);

/// Runs the estimator oracle suite and prints one PASS/FAIL line per check.
EstimatorReport cmd_verify_estimators(const EstimatorSuiteConfig& cfg, std::ostream& out);

/// Rebuilds the summary from the run_* directories under `dir` (metrics.csv
/// plus status.json) and rewrites summary.csv / summary.txt there.
ExperimentSummary cmd_summarize(const std::filesystem::path& dir, std::ostream& out);

constexpr const char* kMetricsHeader = "epoch,alpha,slope,J,J_clf,J_mask,accuracy,fidelity,interpretability,fir,fii";

/// One CSV row in the kMetricsHeader column order, shortest round-trip numbers.
std::string format_metrics_row(const EpochRecord& r);

/// Parses a metrics.csv written by cmd_train.
std::vector<EpochRecord> read_metrics_csv(const std::filesystem::path& path);

/// Number of parallel workers: min(runs, requested or hardware threads), capped by HNS_THREADS.
std::size_t worker_count(std::size_t runs, std::size_t requested);

}  // namespace hns
