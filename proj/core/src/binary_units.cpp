#include "hns/binary_units.hpp"

#include "hns/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hns {

namespace {

const char* const kEstimatorNames[] = {
    "identity_st_bdn", "st1", "st2", "slope_anneal", "reinforce_uncentered", "reinforce_centered",
};

}  // namespace

ThresholdMode parse_threshold_mode(const std::string& name) {
    if (name == "deterministic") return ThresholdMode::deterministic;
    if (name == "stochastic") return ThresholdMode::stochastic;
    throw std::invalid_argument("unknown threshold mode '" + name +
                                "' (expected deterministic|stochastic)");
}

std::string to_string(ThresholdMode mode) {
    return mode == ThresholdMode::deterministic ? "deterministic" : "stochastic";
}

Estimator parse_estimator(const std::string& name) {
    for (std::size_t i = 0; i < std::size(kEstimatorNames); ++i) {
        if (name == kEstimatorNames[i]) return static_cast<Estimator>(i);
    }
    throw std::invalid_argument("unknown estimator '" + name + "'");
}

std::string to_string(Estimator estimator) {
    return kEstimatorNames[static_cast<std::size_t>(estimator)];
}

bool is_reinforce(Estimator estimator) {
    return estimator == Estimator::reinforce_uncentered ||
           estimator == Estimator::reinforce_centered;
}

void BinaryLayerConfig::validate() const {
    if (mode == ThresholdMode::deterministic && estimator != Estimator::identity_st_bdn) {
        throw std::invalid_argument("deterministic thresholding only supports identity_st_bdn, got " +
                                    to_string(estimator));
    }
    if (mode == ThresholdMode::stochastic && estimator == Estimator::identity_st_bdn) {
        throw std::invalid_argument(
            "stochastic thresholding needs st1|st2|slope_anneal|reinforce_uncentered|reinforce_centered");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
    if (!(slope >= 1.0)) throw std::invalid_argument("slope must be >= 1");
    if (!(anneal_rate >= 0.0)) throw std::invalid_argument("anneal rate must be >= 0");
    if (!(slope_max >= 1.0)) throw std::invalid_argument("slope_max must be >= 1");
    if (!(baseline_decay > 0.0 && baseline_decay < 1.0)) {
        throw std::invalid_argument("baseline decay must lie in (0,1)");
    }
}

double NoiseSource::uniform() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

template <typename T>
Tensor<T> step_threshold(const Tensor<T>& z, T tau) {
    std::vector<T> out(z.size());
    std::transform(z.data().begin(), z.data().end(), out.begin(),
                   [tau](T v) { return v >= tau ? T(1) : T(0); });
    return Tensor<T>(z.shape(), std::move(out));
}

namespace {

template <typename T>
void sample_bernoulli(std::span<const T> p, NoiseSource& noise, std::vector<T>& out) {
    out.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        out[i] = noise.uniform() < static_cast<double>(p[i]) ? T(1) : T(0);
    }
}

}  // namespace

template <typename T>
Tensor<T> stochastic_threshold(const Tensor<T>& z, NoiseSource& noise) {
    for (T v : z.data()) {
        if (!(v >= T(0) && v <= T(1))) {
            throw std::domain_error("stochastic_threshold expects probabilities in [0,1], got " +
                                    std::to_string(static_cast<double>(v)));
        }
    }
    std::vector<T> out;
    sample_bernoulli(z.data(), noise, out);
    return Tensor<T>(z.shape(), std::move(out));
}

template <typename T>
Tensor<T> bdn_forward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b, T tau) {
    const SurrogateOp<T> heaviside{
        [tau](std::span<const T> z) {
            std::vector<T> out(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] >= tau ? T(1) : T(0);
            return out;
        },
        [](const SurrogateBackwardArgs<T>& a) {
            return std::vector<T>(a.upstream.begin(), a.upstream.end());
        }};
    return apply_surrogate("heaviside_identity", heaviside, sigmoid(affine(x, W, b)));
}

template <typename T>
BsnSample<T> bsn_forward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b,
                         const BinaryLayerConfig& cfg, NoiseSource& noise) {
    if (cfg.mode != ThresholdMode::stochastic) {
        throw std::invalid_argument("bsn_forward requires stochastic mode");
    }
    BsnSample<T> s;
    s.slope = cfg.estimator == Estimator::slope_anneal ? cfg.slope : 1.0;
    {
        NoGradGuard guard;
        const auto h = affine(x, W, b);
        s.preactivation.assign(h.data().begin(), h.data().end());
    }
    s.probability.resize(s.preactivation.size());
    for (std::size_t i = 0; i < s.preactivation.size(); ++i) {
        s.probability[i] = stable_sigmoid(static_cast<T>(s.slope) * s.preactivation[i]);
    }
    std::vector<T> out;
    sample_bernoulli<T>(s.probability, noise, out);
    s.output = Tensor<T>({x.dim(0), W.dim(1)}, std::move(out));
    return s;
}

template <typename T>
AffineGrads<T> chain_affine(std::span<const T> dh, const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("chain_affine expects x of rank 2, got " + to_string(x.shape()));
    const std::size_t N = x.dim(0), I = x.dim(1);
    if (N == 0 || dh.size() % N) {
        throw ShapeError("chain_affine: " + std::to_string(dh.size()) +
                         " unit gradients do not match batch " + to_string(x.shape()));
    }
    const std::size_t O = dh.size() / N;
    AffineGrads<T> g{std::vector<T>(I * O, T(0)), std::vector<T>(O, T(0))};
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
            const T d = dh[n * O + o];
            g.db[o] += d;
            for (std::size_t i = 0; i < I; ++i) g.dW[i * O + o] += x.data()[n * I + i] * d;
        }
    }
    return g;
}

template <typename T>
AffineGrads<T> grad_st1(std::span<const T> upstream, std::span<const T> sigma, const Tensor<T>& x) {
    if (upstream.size() != sigma.size()) throw ShapeError("grad_st1: upstream/sigma size mismatch");
    std::vector<T> dh(upstream.size());
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] = upstream[i] * sigma[i] * (T(1) - sigma[i]);
    return chain_affine<T>(dh, x);
}

template <typename T>
AffineGrads<T> grad_st2(std::span<const T> upstream, const Tensor<T>& x) {
    return chain_affine(upstream, x);
}

template <typename T>
AffineGrads<T> grad_slope_anneal(std::span<const T> upstream, std::span<const T> sigma_s,
                                 const Tensor<T>& x, T slope) {
    if (!(slope >= T(1))) throw std::domain_error("slope must be >= 1");
    if (upstream.size() != sigma_s.size()) {
        throw ShapeError("grad_slope_anneal: upstream/sigma size mismatch");
    }
    std::vector<T> dh(upstream.size());
    for (std::size_t i = 0; i < dh.size(); ++i) {
        dh[i] = upstream[i] * slope * sigma_s[i] * (T(1) - sigma_s[i]);
    }
    return chain_affine<T>(dh, x);
}

double anneal_slope(double slope, double rate, std::size_t updates_per_epoch) {
    if (rate < 0.0) throw std::invalid_argument("anneal rate must be >= 0");
    if (updates_per_epoch == 0) throw std::invalid_argument("updates per epoch must be >= 1");
    if (rate == 0.0) return slope;
    return slope * std::pow(1.0 + rate, 1.0 / static_cast<double>(updates_per_epoch));
}

template <typename T>
std::vector<T> grad_reinforce_uncentered(std::span<const T> cost, std::span<const T> sample,
                                         std::span<const T> sigma) {
    if (sample.size() != sigma.size() || cost.empty() || sample.size() % cost.size()) {
        throw ShapeError("grad_reinforce_uncentered: missing or inconsistent saved state");
    }
    const std::size_t units = sample.size() / cost.size();
    std::vector<T> g(sample.size());
    for (std::size_t n = 0; n < cost.size(); ++n) {
        for (std::size_t u = 0; u < units; ++u) {
            const std::size_t i = n * units + u;
            g[i] = cost[n] * (sample[i] - sigma[i]);
        }
    }
    return g;
}

ReinforceBaseline::ReinforceBaseline(std::size_t units, double decay, std::size_t warmup)
    : numerator_(units, 0.0), denominator_(units, 0.0), decay_(decay), warmup_(warmup) {}

double ReinforceBaseline::value(std::size_t unit) const {
    if (samples_ < warmup_ || !(denominator_[unit] > 0.0)) return 0.0;
    return numerator_[unit] / denominator_[unit];
}

template <typename T>
void ReinforceBaseline::update(std::span<const T> sample, std::span<const T> sigma, double cost) {
    if (sample.size() != units() || sigma.size() != units()) {
        throw ShapeError("ReinforceBaseline::update: expected " + std::to_string(units()) + " units");
    }
    for (std::size_t u = 0; u < units(); ++u) {
        const double d = static_cast<double>(sample[u]) - static_cast<double>(sigma[u]);
        const double w = d * d;
        numerator_[u] = decay_ * numerator_[u] + (1.0 - decay_) * w * cost;
        denominator_[u] = decay_ * denominator_[u] + (1.0 - decay_) * w;
    }
    ++samples_;
}

template <typename T>
std::vector<T> grad_reinforce_centered(std::span<const T> cost, ReinforceBaseline& baseline,
                                       std::span<const T> sample, std::span<const T> sigma) {
    if (sample.size() != sigma.size() || cost.empty() || sample.size() % cost.size()) {
        throw ShapeError("grad_reinforce_centered: missing or inconsistent saved state");
    }
    const std::size_t units = sample.size() / cost.size();
    if (baseline.units() != units) {
        throw ShapeError("grad_reinforce_centered: baseline tracks " +
                         std::to_string(baseline.units()) + " units, sample has " +
                         std::to_string(units));
    }
    std::vector<T> g(sample.size());
    for (std::size_t n = 0; n < cost.size(); ++n) {
        for (std::size_t u = 0; u < units; ++u) {
            const std::size_t i = n * units + u;
            g[i] = static_cast<T>((static_cast<double>(cost[n]) - baseline.value(u)) *
                                  (static_cast<double>(sample[i]) - static_cast<double>(sigma[i])));
        }
    }
    for (std::size_t n = 0; n < cost.size(); ++n) {
        baseline.update(sample.subspan(n * units, units), sigma.subspan(n * units, units),
                        static_cast<double>(cost[n]));
    }
    return g;
}

template <typename T>
BinaryLayer<T>::BinaryLayer(BinaryLayerConfig config) : state_(std::make_shared<State>()) {
    config.validate();
    state_->config = config;
    state_->slope = config.slope;
    state_->noise = NoiseSource(config.seed);

    auto state = state_;
    SurrogateOp<T> op;
    op.forward = [state](std::span<const T> h) {
        const auto& cfg = state->config;
        const bool sloped = cfg.estimator == Estimator::slope_anneal;
        const T s = sloped ? static_cast<T>(state->slope) : T(1);
        state->probability.resize(h.size());
        for (std::size_t i = 0; i < h.size(); ++i) state->probability[i] = stable_sigmoid(s * h[i]);
        std::vector<T> out(h.size());
        if (cfg.mode == ThresholdMode::deterministic) {
            const T tau = static_cast<T>(cfg.tau);
            for (std::size_t i = 0; i < h.size(); ++i) {
                out[i] = state->probability[i] >= tau ? T(1) : T(0);
            }
        } else {
            NoiseSource& noise = state->active_noise ? *state->active_noise : state->noise;
            sample_bernoulli<T>(state->probability, noise, out);
        }
        return out;
    };

    switch (config.estimator) {
    case Estimator::identity_st_bdn:
    case Estimator::st1:
        op_id_ = config.estimator == Estimator::st1 ? "binary.bernoulli_st1"
                                                    : "binary.heaviside_identity";
        op.backward = [](const SurrogateBackwardArgs<T>& a) {
            std::vector<T> g(a.input.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T p = stable_sigmoid(a.input[i]);
                g[i] = a.upstream[i] * p * (T(1) - p);
            }
            return g;
        };
        break;
    case Estimator::st2:
        op_id_ = "binary.bernoulli_st2";
        op.backward = [](const SurrogateBackwardArgs<T>& a) {
            return std::vector<T>(a.upstream.begin(), a.upstream.end());
        };
        break;
    case Estimator::slope_anneal:
        op_id_ = "binary.bernoulli_slope";
        // on_update() moves the slope only after the backward pass.
        op.backward = [state](const SurrogateBackwardArgs<T>& a) {
            const T s = static_cast<T>(state->slope);
            std::vector<T> g(a.input.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T p = stable_sigmoid(s * a.input[i]);
                g[i] = a.upstream[i] * s * p * (T(1) - p);
            }
            return g;
        };
        break;
    case Estimator::reinforce_uncentered:
    case Estimator::reinforce_centered:
        op_id_ = config.estimator == Estimator::reinforce_centered
                     ? "binary.bernoulli_reinforce_centered"
                     : "binary.bernoulli_reinforce";
        op.backward = [state](const SurrogateBackwardArgs<T>& a) {
            if (state->costs.empty() || a.output.size() % state->costs.size()) {
                throw GraphError("REINFORCE backward needs per-sample costs; call set_sample_costs()");
            }
            std::vector<T> sigma(a.input.size());
            for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = stable_sigmoid(a.input[i]);
            std::vector<T> g;
            if (state->config.estimator == Estimator::reinforce_centered) {
                const std::size_t units = a.output.size() / state->costs.size();
                if (state->baseline.units() != units) {
                    state->baseline = ReinforceBaseline(units, state->config.baseline_decay,
                                                        state->config.baseline_warmup);
                }
                g = grad_reinforce_centered<T>(state->costs, state->baseline, a.output, sigma);
            } else {
                g = grad_reinforce_uncentered<T>(state->costs, a.output, sigma);
            }
            const T inv = T(1) / static_cast<T>(state->costs.size());
            for (auto& v : g) v *= inv;
            state->costs.clear();
            return g;
        };
        break;
    }
    registry_.register_surrogate(op_id_, std::move(op));
}

template <typename T>
Tensor<T> BinaryLayer<T>::forward(const Tensor<T>& preactivation, NoiseSource* noise) {
    state_->active_noise = noise;
    state_->batch = preactivation.rank() ? preactivation.dim(0) : 1;
    auto out = registry_.apply(op_id_, preactivation);
    state_->active_noise = nullptr;
    return out;
}

template <typename T>
void BinaryLayer<T>::set_sample_costs(std::span<const T> costs) {
    if (costs.size() != state_->batch) {
        throw std::invalid_argument("expected " + std::to_string(state_->batch) +
                                    " per-sample costs, got " + std::to_string(costs.size()));
    }
    state_->costs.assign(costs.begin(), costs.end());
}

template <typename T>
void BinaryLayer<T>::on_update(std::size_t updates_per_epoch) {
    const auto& cfg = state_->config;
    if (cfg.estimator != Estimator::slope_anneal) return;
    state_->slope = std::min(cfg.slope_max, anneal_slope(state_->slope, cfg.anneal_rate,
                                                         updates_per_epoch));
}

#define HNS_INSTANTIATE_BINARY(T)                                                                \
    template Tensor<T> step_threshold(const Tensor<T>&, T);                                      \
    template Tensor<T> stochastic_threshold(const Tensor<T>&, NoiseSource&);                     \
    template Tensor<T> bdn_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);     \
    template BsnSample<T> bsn_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                      const BinaryLayerConfig&, NoiseSource&);                   \
    template AffineGrads<T> chain_affine(std::span<const T>, const Tensor<T>&);                  \
    template AffineGrads<T> grad_st1(std::span<const T>, std::span<const T>, const Tensor<T>&);  \
    template AffineGrads<T> grad_st2(std::span<const T>, const Tensor<T>&);                      \
    template AffineGrads<T> grad_slope_anneal(std::span<const T>, std::span<const T>,            \
                                              const Tensor<T>&, T);                              \
    template std::vector<T> grad_reinforce_uncentered(std::span<const T>, std::span<const T>,    \
                                                      std::span<const T>);                       \
    template std::vector<T> grad_reinforce_centered(std::span<const T>, ReinforceBaseline&,      \
                                                    std::span<const T>, std::span<const T>);     \
    template void ReinforceBaseline::update(std::span<const T>, std::span<const T>, double);     \
    template class BinaryLayer<T>;

HNS_INSTANTIATE_BINARY(float)
HNS_INSTANTIATE_BINARY(double)

}  // namespace hns
