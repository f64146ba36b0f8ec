#pragma once

#include "hns/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hns {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Holds references to parameters plus per-parameter moment buffers. The
/// update is a pure function of (params, grads, moments, step count).
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::vector<Tensor<T>> params);

    /// Throws GraphError if any parameter has no gradient buffer.
    void step();
    void zero_grad();

    const OptimizerConfig& config() const { return config_; }
    std::uint64_t step_count() const { return steps_; }
    const std::vector<Tensor<T>>& params() const { return params_; }

    // Moment buffers, exposed for checkpointing.
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return v_; }
    void set_step_count(std::uint64_t steps) { steps_ = steps; }

private:
    OptimizerConfig config_;
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    std::uint64_t steps_ = 0;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace hns
