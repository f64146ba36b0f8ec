#pragma once

#include "hns/tensor.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hns {

/// Arguments handed to a surrogate backward function.
template <typename T>
struct SurrogateBackwardArgs {
    std::span<const T> input;
    std::span<const T> output;
    std::span<const T> upstream;
};

/// A shape-preserving op whose backward pass is supplied by the caller rather
/// than derived from its forward formula (straight-through style gradients).
template <typename T>
struct SurrogateOp {
    std::function<std::vector<T>(std::span<const T> input)> forward;
    std::function<std::vector<T>(const SurrogateBackwardArgs<T>&)> backward;
};

template <typename T>
class SurrogateRegistry {
public:
    /// Throws std::invalid_argument if `op_id` is already registered.
    void register_surrogate(const std::string& op_id, SurrogateOp<T> op);

    bool contains(const std::string& op_id) const { return ops_.count(op_id) != 0; }

    /// Runs the registered forward on `x` and records a node that routes its
    /// gradient through the registered backward.
    Tensor<T> apply(const std::string& op_id, const Tensor<T>& x) const;

private:
    std::map<std::string, SurrogateOp<T>> ops_;
};

/// One-off surrogate node without a registry.
template <typename T>
Tensor<T> apply_surrogate(const std::string& op_id, const SurrogateOp<T>& op, const Tensor<T>& x);

extern template class SurrogateRegistry<float>;
extern template class SurrogateRegistry<double>;

}  // namespace hns
