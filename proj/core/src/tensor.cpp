#include "hns/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace hns {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace detail {

template <typename T>
std::vector<T>& Node<T>::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
}

std::uint64_t next_sequence() {
    static std::atomic<std::uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor() : Tensor(Shape{0}) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
    node_->value.assign(numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
    node_->seq = detail::next_sequence();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
    if (numel(shape) != values.size()) {
        throw ShapeError("tensor shape " + to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    node_->seq = detail::next_sequence();
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
    }
    return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(node_->shape, node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values, std::string op,
                                 std::vector<Tensor> inputs,
                                 std::function<void(detail::Node<T>&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values), false);
    out.node_->op = std::move(op);
    if (!grad_enabled()) return out;
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward_fn);
    return out;
}

template <typename T>
void Tensor<T>::backward() {
    if (size() != 1) {
        throw GraphError("backward() requires a scalar, got shape " + to_string(shape()));
    }
    if (node_->consumed) {
        throw GraphError("backward() called twice on the same graph; run forward again");
    }
    if (!node_->requires_grad) {
        throw GraphError("backward() on a tensor that does not require grad");
    }

    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<detail::Node<T>*> stack{node_.get()};
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        if (n->consumed) {
            throw GraphError("graph node '" + n->op + "' was already released by an earlier backward()");
        }
        order.push_back(n);
        for (auto& in : n->inputs) {
            if (in->requires_grad) stack.push_back(in.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const auto* a, const auto* b) { return a->seq > b->seq; });

    node_->ensure_grad()[0] += T(1);
    for (auto* n : order) {
        if (!n->backward) continue;
        for (auto& in : n->inputs) {
            if (in->requires_grad) in->ensure_grad();
        }
        n->backward(*n);
    }
    // Clearing inputs can drop the last reference to nodes later in `order`,
    // so keep them alive until the loop is done.
    std::vector<std::shared_ptr<detail::Node<T>>> released;
    std::vector<decltype(node_->backward)> closures;
    for (auto* n : order) {
        if (!n->backward) continue;
        closures.push_back(std::move(n->backward));
        n->backward = nullptr;
        for (auto& in : n->inputs) released.push_back(std::move(in));
        n->inputs.clear();
        n->consumed = true;
    }
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template struct detail::Node<float>;
template struct detail::Node<double>;
template class Tensor<float>;
template class Tensor<double>;
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);

}  // namespace hns
