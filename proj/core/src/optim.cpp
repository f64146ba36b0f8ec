#include "hns/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hns {

OptimizerKind parse_optimizer_kind(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd|adam)");
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig config, std::vector<Tensor<T>> params)
    : config_(config), params_(std::move(params)) {
    if (!(config_.lr > 0)) throw std::invalid_argument("learning rate must be positive");
    if (config_.kind == OptimizerKind::adam) {
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), T(0));
            v_.emplace_back(p.size(), T(0));
        }
    }
}

template <typename T>
void Optimizer<T>::step() {
    for (const auto& p : params_) {
        if (!p.has_grad()) {
            throw GraphError("optimizer step on a parameter of shape " + to_string(p.shape()) +
                             " without a gradient");
        }
    }
    ++steps_;
    const T lr = static_cast<T>(config_.lr);
    if (config_.kind == OptimizerKind::sgd) {
        for (auto& p : params_) {
            auto w = p.data();
            auto g = p.grad();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        }
        return;
    }
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T eps = static_cast<T>(config_.eps);
    const T c1 = T(1) - static_cast<T>(std::pow(config_.beta1, static_cast<double>(steps_)));
    const T c2 = T(1) - static_cast<T>(std::pow(config_.beta2, static_cast<double>(steps_)));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto w = params_[k].data();
        auto g = params_[k].grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / c1;
            const T vhat = v[i] / c2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template <typename T>
void Optimizer<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace hns
