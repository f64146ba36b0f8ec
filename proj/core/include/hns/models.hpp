#pragma once

#include "hns/binary_units.hpp"
#include "hns/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hns {

using Real = float;

struct ImageShape {
    std::size_t channels = 1;
    std::size_t height = 28;
    std::size_t width = 28;

    bool operator==(const ImageShape&) const = default;
};

enum class Capacity { small };

Capacity parse_capacity(const std::string& name);
std::string to_string(Capacity capacity);

struct NamedParameter {
    std::string name;
    Tensor<Real> tensor;
};

std::size_t count_parameters(const std::vector<NamedParameter>& params);
std::vector<Tensor<Real>> tensors_of(const std::vector<NamedParameter>& params);

struct ConvLayerSpec {
    std::size_t out_channels;
    std::size_t kernel;
    std::size_t stride;
    std::size_t padding;
};

/// Convolutional autoencoder: strided downscale convs, two FC layers through
/// a bottleneck, transposed-conv upscale path, then a 1x1 conv to one channel.
struct HiderSpec {
    ImageShape input;
    std::vector<ConvLayerSpec> down;
    std::size_t bottleneck = 128;
    std::vector<ConvLayerSpec> up;
    /// Initial bias of the 1x1 head. A negative value starts the continuous
    /// output near a dark background instead of 0.5. Not part of describe().
    double output_bias = -2.0;

    std::size_t total_stride() const;
    std::string describe() const;
};

/// Throws std::invalid_argument when H or W is not divisible by the total
/// downscale stride.
HiderSpec hider_spec(ImageShape input, Capacity capacity = Capacity::small);

class Hider {
public:
    Hider(HiderSpec spec, std::uint64_t seed);

    /// Pre-activation mask map h, shape [N,1,H,W].
    Tensor<Real> logits(const Tensor<Real>& x) const;

    /// sigmoid(h), the continuous [0,1] output used for reconstruction pretraining.
    Tensor<Real> probabilities(const Tensor<Real>& x) const;

    const HiderSpec& spec() const { return spec_; }
    std::vector<NamedParameter>& parameters() { return params_; }
    const std::vector<NamedParameter>& parameters() const { return params_; }
    std::size_t parameter_count() const { return count_parameters(params_); }

    /// Parameters of the downscale convs and the first FC layer.
    std::size_t contraction_parameter_count() const;

private:
    HiderSpec spec_;
    std::vector<NamedParameter> params_;
};

/// Small CNN classifier: 3x3 same-padded convs with ReLU, optional 2x2 max
/// pooling after each, and one FC layer to the class logits.
struct SeekerSpec {
    ImageShape input;
    std::vector<std::size_t> conv_channels;
    std::vector<bool> pool_after;
    std::size_t classes = 10;

    std::string describe() const;
};

/// Throws std::invalid_argument for fewer than 2 classes.
SeekerSpec seeker_spec(ImageShape input, std::size_t classes, Capacity capacity = Capacity::small);

class Seeker {
public:
    Seeker(SeekerSpec spec, std::uint64_t seed);

    /// Class logits, shape [N,K].
    Tensor<Real> forward(const Tensor<Real>& x) const;

    const SeekerSpec& spec() const { return spec_; }
    std::vector<NamedParameter>& parameters() { return params_; }
    const std::vector<NamedParameter>& parameters() const { return params_; }
    std::size_t parameter_count() const { return count_parameters(params_); }

private:
    SeekerSpec spec_;
    std::vector<NamedParameter> params_;
};

/// Elementwise product of x [N,C,H,W] with a single-channel mask [N,1,H,W].
Tensor<Real> apply_mask(const Tensor<Real>& x, const Tensor<Real>& mask);

/// BT.601 luminance of an RGB batch: [N,3,H,W] -> [N,1,H,W]. Records no graph.
Tensor<Real> grayscale(const Tensor<Real>& x);

/// Hider -> binary layer -> mask application -> seeker.
class HnsModel {
public:
    struct Output {
        Tensor<Real> preactivation;
        Tensor<Real> mask;
        Tensor<Real> masked_input;
        Tensor<Real> logits;
    };

    HnsModel(ImageShape input, std::size_t classes, BinaryLayerConfig binary,
             std::uint64_t seed, Capacity hider_capacity = Capacity::small,
             Capacity seeker_capacity = Capacity::small);

    Output forward(const Tensor<Real>& x, NoiseSource* noise = nullptr);

    Hider& hider() { return hider_; }
    const Hider& hider() const { return hider_; }
    Seeker& seeker() { return seeker_; }
    const Seeker& seeker() const { return seeker_; }
    BinaryLayer<Real>& binary() { return binary_; }
    const BinaryLayer<Real>& binary() const { return binary_; }
    ImageShape input_shape() const { return input_; }
    std::size_t classes() const { return classes_; }

    /// Text form of both architectures; hashed into checkpoint headers.
    std::string describe() const;
    std::uint64_t digest() const;

    /// All parameters, prefixed "hider." / "seeker.".
    std::vector<NamedParameter> parameters() const;

    /// True when the seeker has more parameters than the hider's contraction
    /// path (a warning is printed at construction in that case).
    bool seeker_exceeds_contraction() const;

private:
    ImageShape input_;
    std::size_t classes_;
    Hider hider_;
    BinaryLayer<Real> binary_;
    Seeker seeker_;
};

std::uint64_t fnv1a64(std::string_view text);

}  // namespace hns
