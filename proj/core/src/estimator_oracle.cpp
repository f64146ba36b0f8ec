#include "hns/estimator_oracle.hpp"

#include "hns/binary_units.hpp"
#include "hns/ops.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hns {

std::vector<double> ToyBsn::probabilities() const {
    std::vector<double> p(units());
    for (std::size_t k = 0; k < units(); ++k) {
        double h = b[k];
        for (std::size_t i = 0; i < inputs(); ++i) h += x[i] * W[i * units() + k];
        p[k] = 1.0 / (1.0 + std::exp(-h));
    }
    return p;
}

namespace {

void check_enumerable(const ToyBsn& net) {
    if (net.units() > kMaxEnumeratedUnits) {
        throw std::invalid_argument("exact enumeration refused for " + std::to_string(net.units()) +
                                    " units (limit " + std::to_string(kMaxEnumeratedUnits) + ")");
    }
    if (net.W.size() != net.inputs() * net.units()) {
        throw std::invalid_argument("toy network weight matrix has the wrong size");
    }
}

// P(outcome) * J(outcome) for every outcome, with the unit `skip` left out
// of the probability product and pinned to `pinned`.
double conditional_expectation(const ToyBsn& net, const std::vector<double>& p, const ToyLoss& loss,
                               std::size_t skip, double pinned) {
    const std::size_t k = net.units();
    std::vector<double> sample(k);
    double total = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
        if (skip < k && (((mask >> skip) & 1u) != 0) != (pinned != 0.0)) continue;
        double prob = 1.0;
        for (std::size_t u = 0; u < k; ++u) {
            sample[u] = static_cast<double>((mask >> u) & 1u);
            if (u == skip) continue;
            prob *= sample[u] != 0.0 ? p[u] : 1.0 - p[u];
        }
        total += prob * loss(sample);
    }
    return total;
}

}  // namespace

double exact_expected_cost(const ToyBsn& net, const ToyLoss& loss) {
    check_enumerable(net);
    return conditional_expectation(net, net.probabilities(), loss, net.units(), 0.0);
}

ExactGradient exact_expected_gradient(const ToyBsn& net, const ToyLoss& loss) {
    check_enumerable(net);
    const auto p = net.probabilities();
    const std::size_t K = net.units(), I = net.inputs();
    ExactGradient g;
    g.expected_cost = conditional_expectation(net, p, loss, K, 0.0);
    g.db.resize(K);
    g.dW.resize(I * K);
    for (std::size_t k = 0; k < K; ++k) {
        const double dE_dp = conditional_expectation(net, p, loss, k, 1.0) -
                             conditional_expectation(net, p, loss, k, 0.0);
        const double dE_dh = dE_dp * p[k] * (1.0 - p[k]);
        g.db[k] = dE_dh;
        for (std::size_t i = 0; i < I; ++i) g.dW[i * K + k] = net.x[i] * dE_dh;
    }
    return g;
}

bool EstimatorReport::all_passed() const {
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return !checks.empty();
}

double toy_quadratic_cost(std::span<const double> sample) {
    const double r = 1.0 * sample[0] - 2.0 * sample[1] + 1.5 * sample[2] - 3.0;
    return r * r;
}

namespace {

struct RunningMoments {
    std::vector<double> mean, m2;
    std::size_t n = 0;

    explicit RunningMoments(std::size_t dims) : mean(dims, 0.0), m2(dims, 0.0) {}

    void add(const std::vector<double>& v) {
        ++n;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double d = v[i] - mean[i];
            mean[i] += d / static_cast<double>(n);
            m2[i] += d * (v[i] - mean[i]);
        }
    }
    double variance(std::size_t i) const { return m2[i] / static_cast<double>(n - 1); }
    double standard_error(std::size_t i) const {
        return std::sqrt(variance(i) / static_cast<double>(n));
    }
    double total_variance() const {
        double t = 0.0;
        for (std::size_t i = 0; i < mean.size(); ++i) t += variance(i);
        return t;
    }
};

ToyBsn random_toy(NoiseSource& rng) {
    auto u = [&rng](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
    ToyBsn net;
    net.x = {u(-1.0, 1.0), u(-1.0, 1.0)};
    for (int i = 0; i < 6; ++i) net.W.push_back(u(-1.5, 1.5));
    net.b = {u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)};
    return net;
}

// [dW..., db...] from a per-unit signal for a single sample.
std::vector<double> parameter_vector(const ToyBsn& net, std::span<const double> unit_signal) {
    const Tensor<double> x({1, net.inputs()}, net.x);
    const auto g = chain_affine(unit_signal, x);
    std::vector<double> v(g.dW);
    v.insert(v.end(), g.db.begin(), g.db.end());
    return v;
}

// Counts components whose MC mean is within bound*SE of the exact value and
// records the worst z-score.
std::pair<bool, double> within_bound(const RunningMoments& mc, const std::vector<double>& exact,
                                     double bound) {
    bool ok = true;
    double worst = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        const double se = mc.standard_error(i);
        const double z = se > 0.0 ? std::abs(mc.mean[i] - exact[i]) / se
                                  : (mc.mean[i] == exact[i] ? 0.0 : INFINITY);
        worst = std::max(worst, z);
        if (!(z < bound)) ok = false;
    }
    return {ok, worst};
}

}  // namespace

EstimatorReport run_estimator_suite(const EstimatorSuiteConfig& config) {
    EstimatorReport report;
    NoiseSource param_rng(config.seed);

    bool unbiased_ok = true, centered_ok = true, reduction_ok = true;
    std::ostringstream unbiased_detail, centered_detail;
    double min_reduction = 1.0;
    for (std::size_t setting = 0; setting < config.parameter_settings; ++setting) {
        const ToyBsn net = random_toy(param_rng);
        const auto exact = exact_expected_gradient(net, toy_quadratic_cost);
        std::vector<double> exact_vec(exact.dW);
        exact_vec.insert(exact_vec.end(), exact.db.begin(), exact.db.end());

        const auto p = net.probabilities();
        NoiseSource noise(config.seed * 7919 + setting + 1);
        ReinforceBaseline baseline(net.units(), config.baseline_decay, config.baseline_warmup);
        RunningMoments uncentered(exact_vec.size()), centered(exact_vec.size());
        std::vector<double> sample(net.units());
        for (std::size_t s = 0; s < config.samples; ++s) {
            for (std::size_t k = 0; k < net.units(); ++k) sample[k] = noise.uniform() < p[k] ? 1.0 : 0.0;
            const double cost[1] = {toy_quadratic_cost(sample)};
            uncentered.add(parameter_vector(
                net, grad_reinforce_uncentered<double>(cost, sample, p)));
            centered.add(parameter_vector(
                net, grad_reinforce_centered<double>(cost, baseline, sample, p)));
        }
        const auto [u_ok, u_worst] = within_bound(uncentered, exact_vec, config.sigma_bound);
        const auto [c_ok, c_worst] = within_bound(centered, exact_vec, config.sigma_bound);
        const double reduction = 1.0 - centered.total_variance() / uncentered.total_variance();
        min_reduction = std::min(min_reduction, reduction);
        unbiased_ok = unbiased_ok && u_ok;
        centered_ok = centered_ok && c_ok;
        reduction_ok = reduction_ok && reduction >= config.min_variance_reduction &&
                       centered.total_variance() < uncentered.total_variance();
        unbiased_detail << (setting ? "; " : "") << "setting " << setting << " max|z|=" << u_worst;
        centered_detail << (setting ? "; " : "") << "setting " << setting << " max|z|=" << c_worst
                        << " var reduction=" << reduction;
    }
    report.checks.push_back({"reinforce_uncentered_unbiased", unbiased_ok, unbiased_detail.str()});
    {
        std::ostringstream d;
        d << centered_detail.str() << "; min reduction=" << min_reduction << " (need >= "
          << config.min_variance_reduction << ")";
        report.checks.push_back({"reinforce_centered_variance_reduction",
                                 centered_ok && reduction_ok, d.str()});
    }

    // Straight-through identities on a single random sample.
    {
        const ToyBsn net = random_toy(param_rng);
        const Tensor<double> x({1, net.inputs()}, net.x);
        const auto sigma = net.probabilities();
        std::vector<double> upstream(net.units());
        for (auto& u : upstream) u = 2.0 * param_rng.uniform() - 1.0;

        const auto st1 = grad_st1<double>(upstream, sigma, x);
        const auto st2 = grad_st2<double>(upstream, x);
        double ratio_err = 0.0;
        for (std::size_t k = 0; k < net.units(); ++k) {
            const double expected = 1.0 / (sigma[k] * (1.0 - sigma[k]));
            ratio_err = std::max(ratio_err, std::abs(st2.db[k] / st1.db[k] - expected) / expected);
        }

        Tensor<double> W({net.inputs(), net.units()}, net.W, true);
        Tensor<double> b({net.units()}, net.b, true);
        auto y = sigmoid(affine(x, W, b));
        sum(mul(y, Tensor<double>({1, net.units()}, upstream))).backward();
        double autodiff_err = 0.0;
        for (std::size_t i = 0; i < st1.dW.size(); ++i) {
            autodiff_err = std::max(autodiff_err, std::abs(st1.dW[i] - W.grad()[i]));
        }
        for (std::size_t k = 0; k < st1.db.size(); ++k) {
            autodiff_err = std::max(autodiff_err, std::abs(st1.db[k] - b.grad()[k]));
        }
        std::ostringstream d;
        d << "st2/st1 ratio rel err=" << ratio_err << ", st1 vs autodiff max err=" << autodiff_err;
        report.checks.push_back(
            {"straight_through_identities", ratio_err < 1e-12 && autodiff_err < 1e-12, d.str()});

        const auto sa = grad_slope_anneal<double>(upstream, sigma, x, 1.0);
        const bool identical = sa.dW == st1.dW && sa.db == st1.db;
        report.checks.push_back({"slope_anneal_reduces_to_st1", identical,
                                 identical ? "bitwise identical at s=1" : "differs at s=1"});
    }

    // BDN: the identity surrogate for H leaves exactly the sigmoid-affine gradient.
    {
        const ToyBsn net = random_toy(param_rng);
        const Tensor<double> x({1, net.inputs()}, net.x);
        Tensor<double> W1({net.inputs(), net.units()}, net.W, true);
        Tensor<double> b1({net.units()}, net.b, true);
        Tensor<double> W2({net.inputs(), net.units()}, net.W, true);
        Tensor<double> b2({net.units()}, net.b, true);
        sum(bdn_forward(x, W1, b1, 0.5)).backward();
        sum(sigmoid(affine(x, W2, b2))).backward();
        double err = 0.0;
        for (std::size_t i = 0; i < W1.size(); ++i) err = std::max(err, std::abs(W1.grad()[i] - W2.grad()[i]));
        for (std::size_t i = 0; i < b1.size(); ++i) err = std::max(err, std::abs(b1.grad()[i] - b2.grad()[i]));
        std::ostringstream d;
        d << "max |bdn - sigmoid-affine| grad=" << err;
        report.checks.push_back({"bdn_identity_surrogate", err == 0.0, d.str()});
    }
    return report;
}

}  // namespace hns
