#pragma once

#include "hns/binary_units.hpp"
#include "hns/models.hpp"
#include "hns/optim.hpp"
#include "hns/training.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hns {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
    std::string key;
    std::string default_value;
    std::string help;
};

/// Every key the harness understands, with its default.
const std::vector<ConfigKey>& config_schema();

/// Flat key=value settings with dotted keys. Later set() calls win, so
/// applying file values and then command-line values gives CLI > file > default.
class Config {
public:
    Config();

    /// Throws ConfigError for a key outside the schema.
    void set(const std::string& key, const std::string& value);

    /// Parses "key=value" (surrounding whitespace ignored).
    void set_assignment(const std::string& assignment);

    /// Lines of key=value; blank lines and lines starting with '#' are skipped.
    void load_file(const std::filesystem::path& path);
    void load_string(const std::string& text, const std::string& origin = "<string>");

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    /// All keys in schema order, one "key=value" per line.
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

enum class InitCondition { scratch, pretrained_hider, pretrained_seeker, pretrained_both };

InitCondition parse_init_condition(const std::string& name);
std::string to_string(InitCondition init);

struct ExperimentConfig {
    std::string dataset_name = "mnist";
    std::filesystem::path dataset_dir;
    std::size_t train_size = 10000;
    std::size_t test_size = 2000;
    std::uint64_t dataset_seed = 1;

    Capacity hider = Capacity::small;
    Capacity seeker = Capacity::small;
    BinaryLayerConfig binary;
    InitCondition init = InitCondition::pretrained_both;
    OptimizerConfig optimizer;
    AlphaConfig alpha;

    std::size_t epochs = 40;
    std::size_t batch_size = 64;
    std::size_t runs = 10;
    std::uint64_t seed = 1;
    bool stop_when_optimal = false;
    bool stop_after_success = false;
    std::size_t threads = 0;

    std::size_t pretrain_hider_epochs = 3;
    std::size_t pretrain_seeker_epochs = 3;
    std::filesystem::path pretrain_dir;
    std::filesystem::path output_dir;

    bool needs_pretrained_hider() const;
    bool needs_pretrained_seeker() const;
    TrainConfig train_config(std::uint64_t run_seed) const;
    PretrainConfig pretrain_config(std::size_t epochs) const;
};

/// Validates and converts. Throws ConfigError naming the offending key.
ExperimentConfig to_experiment(const Config& config);

}  // namespace hns
