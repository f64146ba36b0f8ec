#include "hns/data.hpp"

#include "hns/binary_units.hpp"
#include "hns/images.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace hns {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string(), 0);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::filesystem::path& path) {
    if (b.size() < off + 4) throw DataError("truncated header in " + path.string(), b.size());
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

void check_labels(const Dataset& ds, std::size_t header) {
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (ds.labels[i] < 0 || static_cast<std::size_t>(ds.labels[i]) >= ds.classes) {
            throw DataError("label " + std::to_string(ds.labels[i]) + " out of range for " +
                                std::to_string(ds.classes) + " classes",
                            header + i);
        }
    }
}

}  // namespace

Tensor<float> Dataset::batch_images(std::span<const std::size_t> indices) const {
    const std::size_t per = image_size();
    std::vector<float> out(indices.size() * per);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(indices[k] * per), per,
                    out.begin() + static_cast<std::ptrdiff_t>(k * per));
    }
    return Tensor<float>({indices.size(), shape.channels, shape.height, shape.width}, std::move(out));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) out[k] = labels[indices[k]];
    return out;
}

std::span<const float> Dataset::image(std::size_t i) const {
    return {images.data() + i * image_size(), image_size()};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::string& name, std::size_t classes) {
    const auto ib = read_file(images);
    const auto lb = read_file(labels);
    const auto imagic = be32(ib, 0, images);
    if (imagic != 0x00000803) throw DataError("bad IDX image magic in " + images.string(), 0);
    const auto lmagic = be32(lb, 0, labels);
    if (lmagic != 0x00000801) throw DataError("bad IDX label magic in " + labels.string(), 0);

    const std::size_t n = be32(ib, 4, images), rows = be32(ib, 8, images), cols = be32(ib, 12, images);
    const std::size_t nl = be32(lb, 4, labels);
    if (n != nl) {
        throw DataError("image count " + std::to_string(n) + " != label count " + std::to_string(nl), 4);
    }
    const std::size_t need = 16 + n * rows * cols;
    if (ib.size() < need) throw DataError("truncated image data in " + images.string(), ib.size());
    if (ib.size() > need) throw DataError("trailing bytes in " + images.string(), need);
    if (lb.size() < 8 + n) throw DataError("truncated label data in " + labels.string(), lb.size());
    if (lb.size() > 8 + n) throw DataError("trailing bytes in " + labels.string(), 8 + n);

    Dataset ds;
    ds.name = name;
    ds.shape = {1, rows, cols};
    ds.classes = classes;
    ds.images.resize(n * rows * cols);
    for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = static_cast<float>(ib[16 + i]) / 255.0f;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lb[8 + i];
    check_labels(ds, 8);
    return ds;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& ds) {
    if (ds.shape.channels != 1) throw std::invalid_argument("IDX export supports single-channel images only");
    {
        std::ofstream out(images, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + images.string() + " for writing", 0);
        put_be32(out, 0x00000803);
        put_be32(out, static_cast<std::uint32_t>(ds.size()));
        put_be32(out, static_cast<std::uint32_t>(ds.shape.height));
        put_be32(out, static_cast<std::uint32_t>(ds.shape.width));
        std::vector<char> bytes(ds.images.size());
        for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(to_byte(ds.images[i]));
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::ofstream out(labels, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + labels.string() + " for writing", 0);
    put_be32(out, 0x00000801);
    put_be32(out, static_cast<std::uint32_t>(ds.size()));
    for (int l : ds.labels) out.put(static_cast<char>(l));
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& files, const std::string& name) {
    constexpr std::size_t kPixels = 3 * 32 * 32, kRecord = kPixels + 1;
    Dataset ds;
    ds.name = name;
    ds.shape = {3, 32, 32};
    ds.classes = 10;
    for (const auto& f : files) {
        const auto b = read_file(f);
        if (b.size() % kRecord != 0) {
            throw DataError(f.string() + " length " + std::to_string(b.size()) + " is not a multiple of 3073",
                            b.size() - b.size() % kRecord);
        }
        for (std::size_t off = 0; off < b.size(); off += kRecord) {
            ds.labels.push_back(b[off]);
            for (std::size_t p = 0; p < kPixels; ++p) ds.images.push_back(static_cast<float>(b[off + 1 + p]) / 255.0f);
        }
    }
    check_labels(ds, 0);
    return ds;
}

void write_cifar10(const std::filesystem::path& file, const Dataset& ds) {
    if (!(ds.shape == ImageShape{3, 32, 32})) throw std::invalid_argument("CIFAR-10 export needs 3x32x32 images");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + file.string() + " for writing", 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out.put(static_cast<char>(ds.labels[i]));
        for (float v : ds.image(i)) out.put(static_cast<char>(to_byte(v)));
    }
}

Dataset load_named(const std::string& name, const std::filesystem::path& dir, Split split) {
    const bool train = split == Split::train;
    if (name == "mnist" || name == "fashion-mnist") {
        const std::string prefix = train ? "train" : "t10k";
        return load_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), name);
    }
    if (name == "cifar10") {
        std::vector<std::filesystem::path> files;
        if (train) {
            for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        } else {
            files.push_back(dir / "test_batch.bin");
        }
        return load_cifar10(files, name);
    }
    throw std::invalid_argument("unknown dataset '" + name + "' (expected mnist, fashion-mnist or cifar10)");
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    NoiseSource rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        std::swap(p[i - 1], p[std::min(j, i - 1)]);
    }
    return p;
}

Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    if (n > ds.size()) {
        throw std::invalid_argument("subset of " + std::to_string(n) + " requested from " +
                                    std::to_string(ds.size()) + " items");
    }
    std::vector<std::vector<std::size_t>> by_class(ds.classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    std::vector<std::size_t> quota(ds.classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < ds.classes; ++c) {
        const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) /
                             static_cast<double>(ds.size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.push_back({exact - static_cast<double>(quota[c]), c});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n && k < remainders.size(); ++k) {
        const std::size_t c = remainders[k].second;
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < ds.classes; ++c) {
        const auto order = permutation(by_class[c].size(), seed * 1000003ULL + c);
        for (std::size_t k = 0; k < quota[c]; ++k) chosen.push_back(by_class[c][order[k]]);
    }
    std::sort(chosen.begin(), chosen.end());

    Dataset out;
    out.name = ds.name;
    out.shape = ds.shape;
    out.classes = ds.classes;
    out.labels.reserve(chosen.size());
    out.images.reserve(chosen.size() * ds.image_size());
    for (auto i : chosen) {
        out.labels.push_back(ds.labels[i]);
        const auto img = ds.image(i);
        out.images.insert(out.images.end(), img.begin(), img.end());
    }
    return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    const auto order = permutation(n, seed);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::vector<std::size_t> b(std::min(n, start + batch_size) - start);
        std::iota(b.begin(), b.end(), start);
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace hns
