#pragma once

#include "hns/models.hpp"
#include "hns/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hns {

/// Parse failure; `offset()` is the byte position where it was detected.
class DataError : public std::runtime_error {
public:
    DataError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Images stored N x C x H x W, values in [0,1].
struct Dataset {
    std::string name;
    ImageShape shape;
    std::size_t classes = 10;
    std::vector<float> images;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t image_size() const { return shape.channels * shape.height * shape.width; }

    Tensor<float> batch_images(std::span<const std::size_t> indices) const;
    std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
    std::span<const float> image(std::size_t i) const;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixel byte v maps to v/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::string& name = "idx", std::size_t classes = 10);

/// Writes IDX files that load_idx reads back to the same values.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& ds);

/// Concatenates CIFAR-10 binary batch files (records of 1 label byte + 3072
/// channel-planar pixel bytes).
Dataset load_cifar10(const std::vector<std::filesystem::path>& files, const std::string& name = "cifar10");
void write_cifar10(const std::filesystem::path& file, const Dataset& ds);

enum class Split { train, test };

/// Loads mnist / fashion-mnist (IDX file names as distributed) or cifar10
/// (data_batch_{1..5}.bin / test_batch.bin) from `dir`.
Dataset load_named(const std::string& name, const std::filesystem::path& dir, Split split);

/// Class-stratified subsample of n items. Each class gets floor(n * share)
/// items, and the remainder goes to the largest fractional parts. Order of
/// the result follows the source order. Throws std::invalid_argument for n > N.
Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Deterministic permutation of [0, n) from a seed.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

/// Shuffled batches covering every index exactly once; last partial batch kept.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

/// Batches in source order, for evaluation.
std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size);

}  // namespace hns
