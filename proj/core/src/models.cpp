#include "hns/models.hpp"

#include "hns/ops.hpp"

#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace hns {

Capacity parse_capacity(const std::string& name) {
    if (name == "small") return Capacity::small;
    throw std::invalid_argument("unknown capacity preset '" + name + "' (expected small)");
}

std::string to_string(Capacity) { return "small"; }

std::size_t count_parameters(const std::vector<NamedParameter>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.size();
    return n;
}

std::vector<Tensor<Real>> tensors_of(const std::vector<NamedParameter>& params) {
    std::vector<Tensor<Real>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

Tensor<Real> uniform_tensor(Shape shape, double bound, NoiseSource& rng) {
    std::vector<Real> values(numel(shape));
    for (auto& v : values) v = static_cast<Real>((2.0 * rng.uniform() - 1.0) * bound);
    return Tensor<Real>(std::move(shape), std::move(values), true);
}

// He-uniform for layers followed by ReLU; plain 1/sqrt(fan_in) otherwise.
double init_bound(std::size_t fan_in, bool relu_follows) {
    return relu_follows ? std::sqrt(6.0 / static_cast<double>(fan_in))
                        : 1.0 / std::sqrt(static_cast<double>(fan_in));
}

void add_param(std::vector<NamedParameter>& params, std::string name, Tensor<Real> t) {
    params.push_back({std::move(name), std::move(t)});
}

const Tensor<Real>& param(const std::vector<NamedParameter>& params, std::size_t i) {
    return params[i].tensor;
}

}  // namespace

std::size_t HiderSpec::total_stride() const {
    std::size_t s = 1;
    for (const auto& d : down) s *= d.stride;
    return s;
}

std::string HiderSpec::describe() const {
    std::ostringstream out;
    out << "hider in=" << input.channels << 'x' << input.height << 'x' << input.width << " down=";
    for (const auto& d : down) out << d.out_channels << ":k" << d.kernel << "s" << d.stride << "p" << d.padding << ',';
    out << " fc=" << bottleneck << " up=";
    for (const auto& u : up) out << u.out_channels << ":k" << u.kernel << "s" << u.stride << ',';
    out << " head=1x1";
    return out.str();
}

HiderSpec hider_spec(ImageShape input, Capacity) {
    HiderSpec spec;
    spec.input = input;
    spec.down = {{16, 3, 2, 1}, {32, 3, 2, 1}};
    spec.bottleneck = 128;
    spec.up = {{16, 2, 2, 0}, {16, 2, 2, 0}};
    const std::size_t s = spec.total_stride();
    if (input.height % s || input.width % s || input.height == 0 || input.width == 0) {
        throw std::invalid_argument("hider input " + std::to_string(input.height) + "x" +
                                    std::to_string(input.width) + " is not divisible by the total stride " +
                                    std::to_string(s));
    }
    return spec;
}

Hider::Hider(HiderSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    NoiseSource rng(seed ^ 0x4869646572ULL);
    std::size_t channels = spec_.input.channels;
    for (std::size_t i = 0; i < spec_.down.size(); ++i) {
        const auto& d = spec_.down[i];
        const std::size_t fan_in = channels * d.kernel * d.kernel;
        add_param(params_, "down" + std::to_string(i) + ".weight",
                  uniform_tensor({d.out_channels, channels, d.kernel, d.kernel}, init_bound(fan_in, true), rng));
        add_param(params_, "down" + std::to_string(i) + ".bias", Tensor<Real>({d.out_channels}, 0.0f, true));
        channels = d.out_channels;
    }
    const std::size_t s = spec_.total_stride();
    const std::size_t flat = channels * (spec_.input.height / s) * (spec_.input.width / s);
    add_param(params_, "fc0.weight", uniform_tensor({flat, spec_.bottleneck}, init_bound(flat, true), rng));
    add_param(params_, "fc0.bias", Tensor<Real>({spec_.bottleneck}, 0.0f, true));
    add_param(params_, "fc1.weight",
              uniform_tensor({spec_.bottleneck, flat}, init_bound(spec_.bottleneck, true), rng));
    add_param(params_, "fc1.bias", Tensor<Real>({flat}, 0.0f, true));
    for (std::size_t i = 0; i < spec_.up.size(); ++i) {
        const auto& u = spec_.up[i];
        const std::size_t fan_in = std::max<std::size_t>(1, channels * u.kernel * u.kernel / (u.stride * u.stride));
        add_param(params_, "up" + std::to_string(i) + ".weight",
                  uniform_tensor({channels, u.out_channels, u.kernel, u.kernel}, init_bound(fan_in, true), rng));
        add_param(params_, "up" + std::to_string(i) + ".bias", Tensor<Real>({u.out_channels}, 0.0f, true));
        channels = u.out_channels;
    }
    add_param(params_, "head.weight", uniform_tensor({1, channels, 1, 1}, init_bound(channels, false), rng));
    add_param(params_, "head.bias", Tensor<Real>({1}, static_cast<Real>(spec_.output_bias), true));
}

Tensor<Real> Hider::logits(const Tensor<Real>& x) const {
    if (x.rank() != 4 || x.dim(1) != spec_.input.channels || x.dim(2) != spec_.input.height ||
        x.dim(3) != spec_.input.width) {
        throw ShapeError("hider expects [N," + std::to_string(spec_.input.channels) + "," +
                         std::to_string(spec_.input.height) + "," + std::to_string(spec_.input.width) +
                         "], got " + to_string(x.shape()));
    }
    const std::size_t N = x.dim(0);
    std::size_t k = 0;
    Tensor<Real> h = x;
    for (const auto& d : spec_.down) {
        h = relu(conv2d(h, param(params_, k), param(params_, k + 1), {d.stride, d.padding}));
        k += 2;
    }
    const Shape grid = h.shape();
    h = reshape(h, {N, grid[1] * grid[2] * grid[3]});
    h = relu(affine(h, param(params_, k), param(params_, k + 1)));
    h = relu(affine(h, param(params_, k + 2), param(params_, k + 3)));
    k += 4;
    h = reshape(h, grid);
    for (const auto& u : spec_.up) {
        h = relu(upconv2d(h, param(params_, k), param(params_, k + 1), {u.stride, u.padding}));
        k += 2;
    }
    return conv2d(h, param(params_, k), param(params_, k + 1), {1, 0});
}

Tensor<Real> Hider::probabilities(const Tensor<Real>& x) const { return sigmoid(logits(x)); }

std::size_t Hider::contraction_parameter_count() const {
    const std::size_t n = 2 * spec_.down.size() + 2;
    std::size_t total = 0;
    for (std::size_t i = 0; i < n && i < params_.size(); ++i) total += params_[i].tensor.size();
    return total;
}

std::string SeekerSpec::describe() const {
    std::ostringstream out;
    out << "seeker in=" << input.channels << 'x' << input.height << 'x' << input.width << " conv=";
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        out << conv_channels[i] << (pool_after[i] ? "+pool" : "") << ',';
    }
    out << " classes=" << classes;
    return out.str();
}

SeekerSpec seeker_spec(ImageShape input, std::size_t classes, Capacity) {
    if (classes < 2) throw std::invalid_argument("seeker needs at least 2 classes");
    SeekerSpec spec;
    spec.input = input;
    spec.conv_channels = {32, 64, 96};
    spec.pool_after = {true, true, false};
    spec.classes = classes;
    if (input.height % 4 || input.width % 4) {
        throw std::invalid_argument("seeker input must be divisible by 4 (two 2x2 pools)");
    }
    return spec;
}

Seeker::Seeker(SeekerSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    NoiseSource rng(seed ^ 0x5365656b6572ULL);
    std::size_t channels = spec_.input.channels, h = spec_.input.height, w = spec_.input.width;
    for (std::size_t i = 0; i < spec_.conv_channels.size(); ++i) {
        const std::size_t out = spec_.conv_channels[i];
        add_param(params_, "conv" + std::to_string(i) + ".weight",
                  uniform_tensor({out, channels, 3, 3}, init_bound(channels * 9, true), rng));
        add_param(params_, "conv" + std::to_string(i) + ".bias", Tensor<Real>({out}, 0.0f, true));
        channels = out;
        if (spec_.pool_after[i]) {
            h /= 2;
            w /= 2;
        }
    }
    const std::size_t flat = channels * h * w;
    add_param(params_, "fc.weight", uniform_tensor({flat, spec_.classes}, init_bound(flat, false), rng));
    add_param(params_, "fc.bias", Tensor<Real>({spec_.classes}, 0.0f, true));
}

Tensor<Real> Seeker::forward(const Tensor<Real>& x) const {
    if (x.rank() != 4 || x.dim(1) != spec_.input.channels || x.dim(2) != spec_.input.height ||
        x.dim(3) != spec_.input.width) {
        throw ShapeError("seeker expects [N," + std::to_string(spec_.input.channels) + "," +
                         std::to_string(spec_.input.height) + "," + std::to_string(spec_.input.width) +
                         "], got " + to_string(x.shape()));
    }
    Tensor<Real> h = x;
    for (std::size_t i = 0; i < spec_.conv_channels.size(); ++i) {
        h = relu(conv2d(h, param(params_, 2 * i), param(params_, 2 * i + 1), {1, 1}));
        if (spec_.pool_after[i]) h = max_pool2d(h, 2);
    }
    const std::size_t N = h.dim(0);
    h = reshape(h, {N, h.size() / N});
    const std::size_t k = 2 * spec_.conv_channels.size();
    return affine(h, param(params_, k), param(params_, k + 1));
}

Tensor<Real> apply_mask(const Tensor<Real>& x, const Tensor<Real>& mask) {
    return mul_channel_broadcast(x, mask);
}

Tensor<Real> grayscale(const Tensor<Real>& x) {
    if (x.rank() != 4 || x.dim(1) != 3) {
        throw ShapeError("grayscale expects [N,3,H,W], got " + to_string(x.shape()));
    }
    const std::size_t N = x.dim(0), P = x.dim(2) * x.dim(3);
    std::vector<Real> out(N * P);
    const auto src = x.data();
    for (std::size_t n = 0; n < N; ++n) {
        const Real* r = src.data() + n * 3 * P;
        for (std::size_t p = 0; p < P; ++p) {
            out[n * P + p] = 0.299f * r[p] + 0.587f * r[P + p] + 0.114f * r[2 * P + p];
        }
    }
    return Tensor<Real>({N, 1, x.dim(2), x.dim(3)}, std::move(out));
}

HnsModel::HnsModel(ImageShape input, std::size_t classes, BinaryLayerConfig binary,
                   std::uint64_t seed, Capacity hider_capacity, Capacity seeker_capacity)
    : input_(input),
      classes_(classes),
      hider_(hider_spec(input, hider_capacity), seed),
      binary_(binary),
      seeker_(seeker_spec(input, classes, seeker_capacity), seed) {
    if (seeker_exceeds_contraction()) {
        std::cerr << "warning: seeker has " << seeker_.parameter_count()
                  << " parameters, more than the hider contraction path ("
                  << hider_.contraction_parameter_count() << ")\n";
    }
}

HnsModel::Output HnsModel::forward(const Tensor<Real>& x, NoiseSource* noise) {
    Output out;
    out.preactivation = hider_.logits(x);
    out.mask = binary_.forward(out.preactivation, noise);
    out.masked_input = apply_mask(x, out.mask);
    out.logits = seeker_.forward(out.masked_input);
    return out;
}

std::string HnsModel::describe() const {
    return hider_.spec().describe() + "; " + seeker_.spec().describe();
}

std::uint64_t HnsModel::digest() const { return fnv1a64(describe()); }

std::vector<NamedParameter> HnsModel::parameters() const {
    std::vector<NamedParameter> out;
    for (const auto& p : hider_.parameters()) out.push_back({"hider." + p.name, p.tensor});
    for (const auto& p : seeker_.parameters()) out.push_back({"seeker." + p.name, p.tensor});
    return out;
}

bool HnsModel::seeker_exceeds_contraction() const {
    return seeker_.parameter_count() > hider_.contraction_parameter_count();
}

}  // namespace hns
