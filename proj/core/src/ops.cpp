#include "hns/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hns {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.size() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(s));
    }
}

struct Geometry {
    std::size_t channels, height, width;
    std::size_t kh, kw, stride, pad;
    std::size_t out_h, out_w;

    std::size_t col_rows() const { return channels * kh * kw; }
    std::size_t col_cols() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = img[c][oy*stride + i - pad][ox*stride + j - pad]
template <typename T>
void im2col(const T* img, const Geometry& g, T* cols) {
    const std::size_t P = g.col_cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                T* row = cols + ((c * g.kh + i) * g.kw + j) * P;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                             static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + oy * g.out_w;
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* src = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                                 static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width))
                                      ? T(0)
                                      : src[x];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-and-adds columns back into the image.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* img) {
    const std::size_t P = g.col_cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const T* row = cols + ((c * g.kh + i) * g.kw + j) * P;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                             static_cast<std::ptrdiff_t>(g.pad);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    const T* src = row + oy * g.out_w;
                    T* dst = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                                 static_cast<std::ptrdiff_t>(g.pad);
                        if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.width)) dst[x] += src[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

}  // namespace

template <typename T>
T stable_sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
    require_rank(x.shape(), 2, "affine input");
    require_rank(W.shape(), 2, "affine weight");
    if (x.dim(1) != W.dim(0) || b.size() != W.dim(1)) {
        throw ShapeError("affine: x " + to_string(x.shape()) + " incompatible with W " +
                         to_string(W.shape()) + " and b " + to_string(b.shape()));
    }
    const std::size_t N = x.dim(0), I = x.dim(1), O = W.dim(1);
    std::vector<T> out(N * O);
    MapMat<T> Y(out.data(), N, O);
    Y.noalias() = CMapMat<T>(x.data().data(), N, I) * CMapMat<T>(W.data().data(), I, O);
    Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.data().data(), O);

    return Tensor<T>::make_result({N, O}, std::move(out), "affine", {x, W, b},
                                  [N, I, O](detail::Node<T>& self) {
        CMapMat<T> dY(self.grad.data(), N, O);
        auto& xin = *self.inputs[0];
        auto& win = *self.inputs[1];
        auto& bin = *self.inputs[2];
        if (xin.requires_grad) {
            MapMat<T>(xin.grad.data(), N, I).noalias() +=
                dY * CMapMat<T>(win.value.data(), I, O).transpose();
        }
        if (win.requires_grad) {
            MapMat<T>(win.grad.data(), I, O).noalias() +=
                CMapMat<T>(xin.value.data(), N, I).transpose() * dY;
        }
        if (bin.requires_grad) {
            // Plain loops: Eigen's vectorized sums reorder by buffer alignment.
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < O; ++o) bin.grad[o] += dY(n, o);
        }
    });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Conv2dOptions opts) {
    require_rank(x.shape(), 4, "conv2d input");
    require_rank(kernel.shape(), 4, "conv2d kernel");
    if (opts.stride == 0) throw ShapeError("conv2d: stride must be >= 1");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), Wd = x.dim(3);
    const std::size_t F = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != C) {
        throw ShapeError("conv2d: input " + to_string(x.shape()) + " has " + std::to_string(C) +
                         " channels but kernel " + to_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)));
    }
    if (kh > H + 2 * opts.padding || kw > Wd + 2 * opts.padding) {
        throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) +
                         " larger than padded input " + to_string(x.shape()));
    }
    if (!bias.empty() && bias.size() != F) {
        throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                         std::to_string(F) + " filters");
    }
    const Geometry g{C, H, Wd, kh, kw, opts.stride, opts.padding,
                     (H + 2 * opts.padding - kh) / opts.stride + 1,
                     (Wd + 2 * opts.padding - kw) / opts.stride + 1};
    const std::size_t R = g.col_rows(), P = g.col_cols();
    const bool has_bias = !bias.empty();

    std::vector<T> cols(N * R * P);
    std::vector<T> out(N * F * P);
    CMapMat<T> K(kernel.data().data(), F, R);
    for (std::size_t n = 0; n < N; ++n) {
        T* cn = cols.data() + n * R * P;
        im2col(x.data().data() + n * C * H * Wd, g, cn);
        MapMat<T> Y(out.data() + n * F * P, F, P);
        Y.noalias() = K * CMapMat<T>(cn, R, P);
        if (has_bias) {
            Y.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.data().data(), F);
        }
    }

    std::vector<Tensor<T>> inputs{x, kernel};
    if (has_bias) inputs.push_back(bias);
    return Tensor<T>::make_result(
        {N, F, g.out_h, g.out_w}, std::move(out), "conv2d", std::move(inputs),
        [g, N, F, R, P, has_bias, cols = std::move(cols)](detail::Node<T>& self) {
            auto& xin = *self.inputs[0];
            auto& kin = *self.inputs[1];
            const std::size_t in_size = g.channels * g.height * g.width;
            std::vector<T> dcols(xin.requires_grad ? R * P : 0);
            for (std::size_t n = 0; n < N; ++n) {
                CMapMat<T> dY(self.grad.data() + n * F * P, F, P);
                if (kin.requires_grad) {
                    MapMat<T>(kin.grad.data(), F, R).noalias() +=
                        dY * CMapMat<T>(cols.data() + n * R * P, R, P).transpose();
                }
                if (xin.requires_grad) {
                    MapMat<T>(dcols.data(), R, P).noalias() =
                        CMapMat<T>(kin.value.data(), F, R).transpose() * dY;
                    col2im(dcols.data(), g, xin.grad.data() + n * in_size);
                }
                if (has_bias && self.inputs[2]->requires_grad) {
                    auto& db = self.inputs[2]->grad;
                    for (std::size_t f = 0; f < F; ++f) {
                        T acc = 0;
                        for (std::size_t p = 0; p < P; ++p) acc += dY(f, p);
                        db[f] += acc;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> upconv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                   Conv2dOptions opts) {
    require_rank(x.shape(), 4, "upconv2d input");
    require_rank(kernel.shape(), 4, "upconv2d kernel");
    if (opts.stride == 0) throw ShapeError("upconv2d: stride must be >= 1");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), Wd = x.dim(3);
    const std::size_t F = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(0) != C) {
        throw ShapeError("upconv2d: input " + to_string(x.shape()) + " has " + std::to_string(C) +
                         " channels but kernel " + to_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(0)));
    }
    const std::size_t full_h = opts.stride * (H - 1) + kh;
    const std::size_t full_w = opts.stride * (Wd - 1) + kw;
    if (full_h <= 2 * opts.padding || full_w <= 2 * opts.padding) {
        throw ShapeError("upconv2d: padding " + std::to_string(opts.padding) +
                         " leaves no output for input " + to_string(x.shape()));
    }
    if (!bias.empty() && bias.size() != F) {
        throw ShapeError("upconv2d: bias " + to_string(bias.shape()) + " does not match " +
                         std::to_string(F) + " filters");
    }
    const std::size_t Ho = full_h - 2 * opts.padding, Wo = full_w - 2 * opts.padding;
    // Geometry of the forward conv that maps [F,Ho,Wo] back to [C,H,W].
    const Geometry g{F, Ho, Wo, kh, kw, opts.stride, opts.padding, H, Wd};
    const std::size_t R = g.col_rows(), P = g.col_cols();
    const bool has_bias = !bias.empty();

    std::vector<T> out(N * F * Ho * Wo, T(0));
    std::vector<T> cols(R * P);
    CMapMat<T> K(kernel.data().data(), C, R);
    for (std::size_t n = 0; n < N; ++n) {
        MapMat<T>(cols.data(), R, P).noalias() =
            K.transpose() * CMapMat<T>(x.data().data() + n * C * P, C, P);
        T* on = out.data() + n * F * Ho * Wo;
        col2im(cols.data(), g, on);
        if (has_bias) {
            for (std::size_t f = 0; f < F; ++f) {
                const T bf = bias.data()[f];
                for (std::size_t k = 0; k < Ho * Wo; ++k) on[f * Ho * Wo + k] += bf;
            }
        }
    }

    std::vector<Tensor<T>> inputs{x, kernel};
    if (has_bias) inputs.push_back(bias);
    return Tensor<T>::make_result(
        {N, F, Ho, Wo}, std::move(out), "upconv2d", std::move(inputs),
        [g, N, C, F, R, P, Ho, Wo, has_bias](detail::Node<T>& self) {
            auto& xin = *self.inputs[0];
            auto& kin = *self.inputs[1];
            std::vector<T> dcols(R * P);
            for (std::size_t n = 0; n < N; ++n) {
                const T* dy = self.grad.data() + n * F * Ho * Wo;
                im2col(dy, g, dcols.data());
                CMapMat<T> D(dcols.data(), R, P);
                if (xin.requires_grad) {
                    MapMat<T>(xin.grad.data() + n * C * P, C, P).noalias() +=
                        CMapMat<T>(kin.value.data(), C, R) * D;
                }
                if (kin.requires_grad) {
                    MapMat<T>(kin.grad.data(), C, R).noalias() +=
                        CMapMat<T>(xin.value.data() + n * C * P, C, P) * D.transpose();
                }
                if (has_bias && self.inputs[2]->requires_grad) {
                    auto& bg = self.inputs[2]->grad;
                    for (std::size_t f = 0; f < F; ++f) {
                        T acc = 0;
                        for (std::size_t k = 0; k < Ho * Wo; ++k) acc += dy[f * Ho * Wo + k];
                        bg[f] += acc;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t window) {
    require_rank(x.shape(), 4, "max_pool2d input");
    if (window == 0) throw ShapeError("max_pool2d: window must be >= 1");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), Wd = x.dim(3);
    if (H % window || Wd % window) {
        throw ShapeError("max_pool2d: window " + std::to_string(window) +
                         " does not divide input " + to_string(x.shape()));
    }
    const std::size_t Ho = H / window, Wo = Wd / window;
    std::vector<T> out(N * C * Ho * Wo);
    std::vector<std::size_t> argmax(out.size());
    const T* src = x.data().data();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* plane = src + nc * H * Wd;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                std::size_t best = (oy * window) * Wd + ox * window;
                for (std::size_t i = 0; i < window; ++i) {
                    for (std::size_t j = 0; j < window; ++j) {
                        const std::size_t k = (oy * window + i) * Wd + ox * window + j;
                        if (plane[k] > plane[best]) best = k;
                    }
                }
                const std::size_t o = nc * Ho * Wo + oy * Wo + ox;
                out[o] = plane[best];
                argmax[o] = nc * H * Wd + best;
            }
        }
    }
    return Tensor<T>::make_result({N, C, Ho, Wo}, std::move(out), "max_pool2d", {x},
                                  [argmax = std::move(argmax)](detail::Node<T>& self) {
        auto& g = self.inputs[0]->grad;
        for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z) {
    std::vector<T> out(z.size());
    std::transform(z.data().begin(), z.data().end(), out.begin(), stable_sigmoid<T>);
    return Tensor<T>::make_result(z.shape(), std::move(out), "sigmoid", {z},
                                  [](detail::Node<T>& self) {
        auto& g = self.inputs[0]->grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T s = self.value[i];
            g[i] += self.grad[i] * s * (T(1) - s);
        }
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& z) {
    std::vector<T> out(z.size());
    std::transform(z.data().begin(), z.data().end(), out.begin(),
                   [](T v) { return v > T(0) ? v : T(0); });
    return Tensor<T>::make_result(z.shape(), std::move(out), "relu", {z},
                                  [](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < in.grad.size(); ++i) {
            if (in.value[i] > T(0)) in.grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return Tensor<T>::make_result(std::move(shape), std::move(out), "reshape", {x},
                                  [](detail::Node<T>& self) {
        accumulate(self.inputs[0]->grad, self.grad);
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), "add", {a, b},
                                  [](detail::Node<T>& self) {
        for (auto& in : self.inputs) {
            if (in->requires_grad) accumulate(in->grad, self.grad);
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), "mul", {a, b},
                                  [](detail::Node<T>& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (A.requires_grad) A.grad[i] += self.grad[i] * B.value[i];
            if (B.requires_grad) B.grad[i] += self.grad[i] * A.value[i];
        }
    });
}

template <typename T>
Tensor<T> mul_channel_broadcast(const Tensor<T>& x, const Tensor<T>& m) {
    require_rank(x.shape(), 4, "mul_channel_broadcast input");
    require_rank(m.shape(), 4, "mul_channel_broadcast mask");
    if (m.dim(0) != x.dim(0) || m.dim(1) != 1 || m.dim(2) != x.dim(2) || m.dim(3) != x.dim(3)) {
        throw ShapeError("mask " + to_string(m.shape()) + " cannot be broadcast over input " +
                         to_string(x.shape()));
    }
    const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
    std::vector<T> out(x.size());
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t p = 0; p < P; ++p) {
                out[(n * C + c) * P + p] = x.data()[(n * C + c) * P + p] * m.data()[n * P + p];
            }
        }
    }
    return Tensor<T>::make_result(x.shape(), std::move(out), "mul_channel_broadcast", {x, m},
                                  [N, C, P](detail::Node<T>& self) {
        auto& X = *self.inputs[0];
        auto& M = *self.inputs[1];
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t p = 0; p < P; ++p) {
                    const std::size_t i = (n * C + c) * P + p;
                    if (X.requires_grad) X.grad[i] += self.grad[i] * M.value[n * P + p];
                    if (M.requires_grad) M.grad[n * P + p] += self.grad[i] * X.value[i];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
    return Tensor<T>::make_result(x.shape(), std::move(out), "scale", {x},
                                  [factor](detail::Node<T>& self) {
        auto& g = self.inputs[0]->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = 0;
    for (T v : x.data()) acc += v;
    return Tensor<T>::make_result({}, {acc}, "sum", {x}, [](detail::Node<T>& self) {
        for (auto& g : self.inputs[0]->grad) g += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.size() == 0) throw ShapeError("mean of an empty tensor");
    T acc = 0;
    for (T v : x.data()) acc += v;
    const T inv = T(1) / static_cast<T>(x.size());
    return Tensor<T>::make_result({}, {acc * inv}, "mean", {x}, [inv](detail::Node<T>& self) {
        for (auto& g : self.inputs[0]->grad) g += self.grad[0] * inv;
    });
}

namespace {

template <typename T>
void check_targets(const Tensor<T>& logits, std::span<const int> targets) {
    require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
    if (targets.size() != logits.dim(0)) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + to_string(logits.shape()));
    }
    const int K = static_cast<int>(logits.dim(1));
    for (int t : targets) {
        if (t < 0 || t >= K) {
            throw std::out_of_range("class index " + std::to_string(t) + " outside [0," +
                                    std::to_string(K) + ")");
        }
    }
}

// Row-wise softmax, returns log-sum-exp per row.
template <typename T>
std::vector<T> softmax_rows(std::span<const T> logits, std::size_t N, std::size_t K,
                            std::vector<T>& probs) {
    probs.resize(N * K);
    std::vector<T> lse(N);
    for (std::size_t n = 0; n < N; ++n) {
        const T* row = logits.data() + n * K;
        const T mx = *std::max_element(row, row + K);
        T z = 0;
        for (std::size_t k = 0; k < K; ++k) {
            probs[n * K + k] = std::exp(row[k] - mx);
            z += probs[n * K + k];
        }
        for (std::size_t k = 0; k < K; ++k) probs[n * K + k] /= z;
        lse[n] = mx + std::log(z);
    }
    return lse;
}

}  // namespace

template <typename T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, std::span<const int> targets) {
    check_targets(logits, targets);
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    std::vector<T> probs;
    const auto lse = softmax_rows(logits.data(), N, K, probs);
    std::vector<T> out(N);
    for (std::size_t n = 0; n < N; ++n) {
        out[n] = lse[n] - logits.data()[n * K + static_cast<std::size_t>(targets[n])];
    }
    return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
    check_targets(logits, targets);
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    std::vector<T> probs;
    const auto lse = softmax_rows(logits.data(), N, K, probs);
    T loss = 0;
    for (std::size_t n = 0; n < N; ++n) {
        loss += lse[n] - logits.data()[n * K + static_cast<std::size_t>(targets[n])];
    }
    loss /= static_cast<T>(N);
    std::vector<int> labels(targets.begin(), targets.end());
    return Tensor<T>::make_result(
        {}, {loss}, "softmax_cross_entropy", {logits},
        [N, K, probs = std::move(probs), labels = std::move(labels)](detail::Node<T>& self) {
            auto& g = self.inputs[0]->grad;
            const T scale_factor = self.grad[0] / static_cast<T>(N);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t k = 0; k < K; ++k) {
                    const T onehot = static_cast<int>(k) == labels[n] ? T(1) : T(0);
                    g[n * K + k] += (probs[n * K + k] - onehot) * scale_factor;
                }
            }
        });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred, target, "mse");
    if (pred.size() == 0) throw ShapeError("mse of empty tensors");
    T acc = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred.data()[i] - target.data()[i];
        acc += d * d;
    }
    const T inv = T(1) / static_cast<T>(pred.size());
    return Tensor<T>::make_result({}, {acc * inv}, "mse", {pred, target},
                                  [inv](detail::Node<T>& self) {
        auto& P = *self.inputs[0];
        auto& Q = *self.inputs[1];
        const T g0 = self.grad[0] * T(2) * inv;
        for (std::size_t i = 0; i < P.value.size(); ++i) {
            const T d = P.value[i] - Q.value[i];
            if (P.requires_grad) P.grad[i] += g0 * d;
            if (Q.requires_grad) Q.grad[i] -= g0 * d;
        }
    });
}

#define HNS_INSTANTIATE_OPS(T)                                                                   \
    template T stable_sigmoid<T>(T);                                                             \
    template Tensor<T> affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                              Conv2dOptions);                                                    \
    template Tensor<T> upconv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                Conv2dOptions);                                                  \
    template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t);                                \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                \
    template Tensor<T> relu(const Tensor<T>&);                                                   \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> mul_channel_broadcast(const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> scale(const Tensor<T>&, T);                                               \
    template Tensor<T> sum(const Tensor<T>&);                                                    \
    template Tensor<T> mean(const Tensor<T>&);                                                   \
    template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);            \
    template std::vector<T> cross_entropy_per_sample(const Tensor<T>&, std::span<const int>);    \
    template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);

HNS_INSTANTIATE_OPS(float)
HNS_INSTANTIATE_OPS(double)

}  // namespace hns
