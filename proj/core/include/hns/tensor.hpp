#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hns {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

template <typename T>
class Tensor;

namespace detail {

// One record of the computation graph. Non-leaf nodes own a closure that
// reads `grad` and accumulates into the grads of `inputs`.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool consumed = false;
    std::string op = "leaf";
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad();
};

std::uint64_t next_sequence();

}  // namespace detail

/// Gradient recording is on by default; a NoGradGuard switches it off for the
/// current thread (evaluation passes).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Shared handle to a node of the reverse-mode graph. Copies alias the same
/// storage, so parameters can be handed to optimizers by value.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor();
    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor scalar(T value, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return node_->value.size(); }
    bool empty() const { return node_->value.empty(); }

    std::span<const T> data() const { return node_->value; }
    std::span<T> data() { return node_->value; }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad();

    const std::string& op() const { return node_->op; }
    bool is_leaf() const { return !node_->backward; }

    /// Copy of the values with no graph history.
    Tensor detach() const;

    /// Accumulates d(this)/d(leaf) into every reachable leaf that requires
    /// grad. Visits nodes in exact reverse creation order and releases the
    /// graph afterwards.
    void backward();

    const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

    /// Wraps an op result. `inputs` are recorded only when grad recording is
    /// enabled and at least one input requires grad.
    static Tensor make_result(Shape shape, std::vector<T> values, std::string op,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node<T>&)> backward_fn);

private:
    explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node<T>> node_;
};

template <typename T>
bool all_finite(const Tensor<T>& t);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace hns
