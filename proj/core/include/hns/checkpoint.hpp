#pragma once

#include "hns/models.hpp"
#include "hns/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace hns {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for a wrong magic or an architecture digest that does not match.
class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

struct Blob {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct CheckpointFile {
    std::uint64_t digest = 0;
    std::vector<Blob> blobs;

    const Blob* find(const std::string& name) const;
};

/// Layout, all little-endian:
///   "HNS1" | u64 digest | u32 blob count |
///   per blob: u32 name length | name bytes | u32 rank | u64 extents[rank] | f32 values
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

std::vector<Blob> to_blobs(const std::vector<NamedParameter>& params, const std::string& prefix = "");

/// Copies blob values into matching parameters (name = prefix + parameter name).
/// Throws CheckpointError for a missing blob or a shape mismatch.
void load_blobs(const CheckpointFile& file, const std::vector<NamedParameter>& params,
                const std::string& prefix = "");

/// Whole-model save/load keyed by the model's architecture digest.
void save_model(const std::filesystem::path& path, const HnsModel& model);
void load_model(const std::filesystem::path& path, HnsModel& model);

/// Single-network checkpoints used for pretraining; digest is the network's spec text.
void save_hider(const std::filesystem::path& path, const Hider& hider);
void load_hider(const std::filesystem::path& path, Hider& hider);
void save_seeker(const std::filesystem::path& path, const Seeker& seeker);
void load_seeker(const std::filesystem::path& path, Seeker& seeker);

}  // namespace hns
