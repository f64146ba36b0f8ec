#include "hns/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hns {

namespace {

template <typename T>
std::pair<std::size_t, std::size_t> count_binary(const Tensor<T>& masks, std::size_t sample, std::size_t per) {
    const auto d = masks.data();
    std::size_t zeros = 0;
    for (std::size_t j = 0; j < per; ++j) {
        const T v = d[sample * per + j];
        if (v == T(0)) {
            ++zeros;
        } else if (v != T(1)) {
            throw std::invalid_argument("mask value " + std::to_string(static_cast<double>(v)) +
                                        " is not binary");
        }
    }
    return {zeros, per - zeros};
}

template <typename T>
double mean_fraction(const Tensor<T>& masks, bool hidden) {
    if (masks.empty()) throw std::invalid_argument("empty mask batch");
    const std::size_t N = masks.rank() == 0 ? 1 : masks.dim(0);
    const std::size_t per = masks.size() / N;
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const auto [zeros, ones] = count_binary(masks, n, per);
        total += static_cast<double>(hidden ? zeros : ones) / static_cast<double>(per);
    }
    return total / static_cast<double>(N);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("n/a"); }

}  // namespace

template <typename T>
double interpretability(const Tensor<T>& masks) {
    return mean_fraction(masks, true);
}

template <typename T>
double fraction_passed(const Tensor<T>& masks) {
    return mean_fraction(masks, false);
}

template double interpretability<float>(const Tensor<float>&);
template double interpretability<double>(const Tensor<double>&);
template double fraction_passed<float>(const Tensor<float>&);
template double fraction_passed<double>(const Tensor<double>&);

double interpretability(std::size_t hidden, std::size_t total) {
    if (total == 0 || hidden > total) throw std::invalid_argument("interpretability needs 0 <= hidden <= total, total > 0");
    return static_cast<double>(hidden) / static_cast<double>(total);
}

double fidelity(double accuracy, double baseline_accuracy) {
    if (!(baseline_accuracy > 0.0)) throw std::invalid_argument("fidelity needs a positive baseline accuracy");
    return accuracy / baseline_accuracy;
}

double fidelity_for_report(double f) { return std::clamp(f, 0.0, 1.5); }

std::optional<double> fir(double f, double i) {
    if (f + i == 0.0) return std::nullopt;
    return f / (f + i);
}

double fii(double f, double i) { return f * i; }

std::string to_string(Collapse c) {
    switch (c) {
        case Collapse::none: return "none";
        case Collapse::fidelity_collapse: return "fidelity_collapse";
        case Collapse::interpretability_collapse: return "interpretability_collapse";
    }
    return "?";
}

Collapse detect_collapse(double f, double i) {
    if (f < kCollapseThreshold) return Collapse::fidelity_collapse;
    if (i < kCollapseThreshold) return Collapse::interpretability_collapse;
    return Collapse::none;
}

bool is_optimal(double f, double i) { return f >= kOptimalThreshold && i >= kOptimalThreshold; }

EpochRecord make_epoch_record(std::size_t epoch, double alpha, double slope, double J, double J_clf,
                              double J_mask, double accuracy, double interp, double baseline_accuracy) {
    EpochRecord r;
    r.epoch = epoch;
    r.alpha = alpha;
    r.slope = slope;
    r.J = J;
    r.J_clf = J_clf;
    r.J_mask = J_mask;
    r.accuracy = accuracy;
    r.fidelity = fidelity(accuracy, baseline_accuracy);
    r.interpretability = interp;
    r.fir = hns::fir(r.fidelity, interp);
    r.fii = hns::fii(r.fidelity, interp);
    return r;
}

const EpochRecord& RunMetrics::final_record() const {
    if (epochs.empty()) throw std::logic_error("run " + std::to_string(run) + " has no epoch records");
    return epochs.back();
}

Collapse RunMetrics::collapse() const {
    const auto& r = final_record();
    return detect_collapse(r.fidelity, r.interpretability);
}

bool RunMetrics::optimal() const {
    const auto& r = final_record();
    return is_optimal(r.fidelity, r.interpretability);
}

std::optional<std::size_t> RunMetrics::convergence_epoch() const {
    for (const auto& e : epochs) {
        if (is_optimal(e.fidelity, e.interpretability)) return e.epoch;
    }
    return std::nullopt;
}

double standard_deviation(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    // Shifted by the first value so that identical inputs give exactly 0.
    const double shift = v.front();
    double mean = 0.0;
    for (double x : v) mean += x - shift;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - shift - mean) * (x - shift - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

ExperimentSummary summarize(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) throw std::invalid_argument("summarize needs at least one run");
    ExperimentSummary s;
    s.runs = runs.size();
    std::vector<double> finals, intra, convergence, firs;
    auto accumulate = [](Aggregate& a, double v) {
        a.peak = a.count ? std::max(a.peak, v) : v;
        a.mean += v;
        ++a.count;
    };
    for (const auto& r : runs) {
        if (r.failed || r.epochs.empty()) {
            ++s.failed_runs;
            continue;
        }
        const auto& last = r.final_record();
        finals.push_back(last.accuracy);

        std::vector<double> deltas;
        for (std::size_t e = 1; e < r.epochs.size(); ++e) {
            deltas.push_back(r.epochs[e].accuracy - r.epochs[e - 1].accuracy);
        }
        intra.push_back(standard_deviation(deltas));

        if (auto c = r.convergence_epoch()) convergence.push_back(static_cast<double>(*c));
        if (r.optimal()) ++s.optimal_runs;

        switch (r.collapse()) {
            case Collapse::fidelity_collapse: ++s.fidelity_collapses; continue;
            case Collapse::interpretability_collapse: ++s.interpretability_collapses; continue;
            case Collapse::none: break;
        }
        const double f = fidelity_for_report(last.fidelity);
        accumulate(s.fidelity, f);
        accumulate(s.interpretability, last.interpretability);
        accumulate(s.fii, fii(f, last.interpretability));
        if (auto q = fir(f, last.interpretability)) firs.push_back(*q);
    }
    for (Aggregate* a : {&s.fidelity, &s.interpretability, &s.fii}) {
        if (a->count) a->mean /= static_cast<double>(a->count);
    }
    if (!firs.empty()) {
        double t = 0.0;
        for (double v : firs) t += v;
        s.mean_fir = t / static_cast<double>(firs.size());
    }
    if (!convergence.empty()) {
        double t = 0.0;
        for (double v : convergence) t += v;
        s.mean_convergence_epoch = t / static_cast<double>(convergence.size());
        s.fastest_convergence_epoch =
            static_cast<std::size_t>(*std::min_element(convergence.begin(), convergence.end()));
    }
    if (!intra.empty()) {
        double t = 0.0;
        for (double v : intra) t += v;
        s.intra_model_variance = t / static_cast<double>(intra.size());
    }
    s.inter_model_variance = standard_deviation(finals);
    return s;
}

std::string format_summary_table(const ExperimentSummary& s) {
    auto agg = [](const Aggregate& a) {
        return a.count ? fmt(a.mean) + " / " + fmt(a.peak) : std::string("n/a");
    };
    std::ostringstream out;
    out << "runs                                  " << s.runs << '\n'
        << "failed runs                           " << s.failed_runs << '\n'
        << "optimal runs (F>=0.9, I>=0.9)         " << s.optimal_runs << '\n'
        << "models collapsed (<20% fidelity)      " << s.fidelity_collapses << '\n'
        << "models collapsed (<20% interpret.)    " << s.interpretability_collapses << '\n'
        << "fidelity mean / peak                  " << agg(s.fidelity) << '\n'
        << "interpretability mean / peak          " << agg(s.interpretability) << '\n'
        << "FII mean / peak                       " << agg(s.fii) << '\n'
        << "FIR mean                              " << fmt(s.mean_fir) << '\n'
        << "convergence epoch mean                " << fmt(s.mean_convergence_epoch) << '\n'
        << "convergence epoch fastest             "
        << (s.fastest_convergence_epoch ? std::to_string(*s.fastest_convergence_epoch) : "n/a") << '\n'
        << "intra-model variance                  " << fmt(s.intra_model_variance) << '\n'
        << "inter-model variance                  " << fmt(s.inter_model_variance) << '\n';
    return out.str();
}

std::string format_summary_csv(const ExperimentSummary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    auto mean_of = [](const Aggregate& a) { return a.count ? fmt(a.mean) : std::string(); };
    auto peak_of = [](const Aggregate& a) { return a.count ? fmt(a.peak) : std::string(); };
    std::ostringstream out;
    out << "runs,failed,optimal,fidelity_collapses,interpretability_collapses,fidelity_mean,fidelity_peak,"
           "interpretability_mean,interpretability_peak,fii_mean,fii_peak,fir_mean,convergence_mean,"
           "convergence_fastest,intra_variance,inter_variance\n";
    out << s.runs << ',' << s.failed_runs << ',' << s.optimal_runs << ',' << s.fidelity_collapses << ','
        << s.interpretability_collapses << ',' << mean_of(s.fidelity) << ',' << peak_of(s.fidelity) << ','
        << mean_of(s.interpretability) << ',' << peak_of(s.interpretability) << ',' << mean_of(s.fii) << ','
        << peak_of(s.fii) << ',' << opt(s.mean_fir) << ',' << opt(s.mean_convergence_epoch) << ','
        << (s.fastest_convergence_epoch ? std::to_string(*s.fastest_convergence_epoch) : "") << ','
        << fmt(s.intra_model_variance) << ',' << fmt(s.inter_model_variance) << '\n';
    return out.str();
}

}  // namespace hns
