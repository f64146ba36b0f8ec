#include "hns/surrogate.hpp"

#include <stdexcept>

namespace hns {

template <typename T>
void SurrogateRegistry<T>::register_surrogate(const std::string& op_id, SurrogateOp<T> op) {
    if (!op.forward || !op.backward) {
        throw std::invalid_argument("surrogate '" + op_id + "' needs both forward and backward");
    }
    if (!ops_.emplace(op_id, std::move(op)).second) {
        throw std::invalid_argument("surrogate '" + op_id + "' is already registered");
    }
}

template <typename T>
Tensor<T> SurrogateRegistry<T>::apply(const std::string& op_id, const Tensor<T>& x) const {
    const auto it = ops_.find(op_id);
    if (it == ops_.end()) throw std::invalid_argument("unknown surrogate '" + op_id + "'");
    return apply_surrogate(op_id, it->second, x);
}

template <typename T>
Tensor<T> apply_surrogate(const std::string& op_id, const SurrogateOp<T>& op, const Tensor<T>& x) {
    auto out = op.forward(x.data());
    if (out.size() != x.size()) {
        throw ShapeError("surrogate '" + op_id + "' changed the element count");
    }
    return Tensor<T>::make_result(x.shape(), std::move(out), op_id, {x},
                                  [backward = op.backward, op_id](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        const auto g = backward({in.value, self.value, self.grad});
        if (g.size() != in.grad.size()) {
            throw ShapeError("surrogate '" + op_id + "' backward returned the wrong size");
        }
        for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i];
    });
}

template class SurrogateRegistry<float>;
template class SurrogateRegistry<double>;
template Tensor<float> apply_surrogate(const std::string&, const SurrogateOp<float>&,
                                       const Tensor<float>&);
template Tensor<double> apply_surrogate(const std::string&, const SurrogateOp<double>&,
                                        const Tensor<double>&);

}  // namespace hns
