#include "hns/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace hns {

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"dataset.name", "mnist", "mnist | fashion-mnist | cifar10"},
        {"dataset.dir", "", "dataset directory; empty means data/<dataset.name>"},
        {"dataset.train_size", "10000", "stratified training subset size"},
        {"dataset.test_size", "2000", "stratified test subset size"},
        {"dataset.seed", "1", "seed of the subset draw"},
        {"model.hider", "small", "hider capacity preset"},
        {"model.seeker", "small", "seeker capacity preset"},
        {"binary.mode", "deterministic", "deterministic | stochastic"},
        {"binary.estimator", "auto",
         "auto | identity_st_bdn | st1 | st2 | slope_anneal | reinforce_uncentered | reinforce_centered"},
        {"binary.tau", "0.5", "deterministic threshold"},
        {"binary.slope", "1", "initial sigmoid slope (slope_anneal)"},
        {"binary.anneal_rate", "0", "slope growth per epoch (slope_anneal)"},
        {"binary.slope_max", "1000", "slope cap (slope_anneal)"},
        {"binary.baseline_decay", "0.99", "baseline moving-average decay (reinforce_centered)"},
        {"binary.baseline_warmup", "100", "samples before the baseline is used"},
        {"init", "pretrained_both", "scratch | pretrained_hider | pretrained_seeker | pretrained_both"},
        {"optimizer.kind", "adam", "adam | sgd"},
        {"optimizer.lr", "0.001", "learning rate"},
        {"alpha.mode", "adaptive", "adaptive | fixed"},
        {"alpha.value", "1", "initial (or fixed) alpha"},
        {"alpha.delta", "0.05", "alpha decrement per drop"},
        {"alpha.floor", "0.01", "smallest alpha"},
        {"alpha.tolerance", "0.1", "allowed deviation from the queue mean, as a fraction"},
        {"alpha.queue", "100", "queue length"},
        {"alpha.running_mean", "true", "queue the running mean since the last drop instead of raw losses"},
        {"train.epochs", "40", "epochs per run"},
        {"train.batch_size", "64", "batch size"},
        {"train.runs", "10", "independent runs"},
        {"train.seed", "1", "base seed; run i uses seed + i"},
        {"train.stop_when_optimal", "false", "end a run at its first optimal epoch"},
        {"train.stop_after_success", "false", "skip remaining runs once one run is optimal"},
        {"train.threads", "0", "parallel runs; 0 means min(runs, cores), capped by HNS_THREADS"},
        {"pretrain.hider_epochs", "3", "hider reconstruction epochs"},
        {"pretrain.seeker_epochs", "3", "seeker classification epochs"},
        {"pretrain.dir", "", "pretrained checkpoints; empty means <output.dir>/pretrained"},
        {"output.dir", "runs", "output directory"},
    };
    return schema;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config::Config() {
    for (const auto& k : config_schema()) values_[k.key] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::load_string(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        try {
            set_assignment(t);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void Config::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    load_string(text.str(), path.string());
}

const std::string& Config::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const auto& v = get(key);
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
    return out;
}

std::uint64_t Config::get_uint(const std::string& key) const {
    const auto& v = get(key);
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
    }
    return out;
}

bool Config::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::string Config::dump() const {
    std::ostringstream out;
    for (const auto& k : config_schema()) out << k.key << '=' << values_.at(k.key) << '\n';
    return out.str();
}

InitCondition parse_init_condition(const std::string& name) {
    if (name == "scratch") return InitCondition::scratch;
    if (name == "pretrained_hider") return InitCondition::pretrained_hider;
    if (name == "pretrained_seeker") return InitCondition::pretrained_seeker;
    if (name == "pretrained_both") return InitCondition::pretrained_both;
    throw ConfigError("init: unknown condition '" + name +
                      "' (expected scratch|pretrained_hider|pretrained_seeker|pretrained_both)");
}

std::string to_string(InitCondition init) {
    switch (init) {
        case InitCondition::scratch: return "scratch";
        case InitCondition::pretrained_hider: return "pretrained_hider";
        case InitCondition::pretrained_seeker: return "pretrained_seeker";
        case InitCondition::pretrained_both: return "pretrained_both";
    }
    return "?";
}

bool ExperimentConfig::needs_pretrained_hider() const {
    return init == InitCondition::pretrained_hider || init == InitCondition::pretrained_both;
}

bool ExperimentConfig::needs_pretrained_seeker() const {
    return init == InitCondition::pretrained_seeker || init == InitCondition::pretrained_both;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t run_seed) const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.optimizer = optimizer;
    t.alpha = alpha;
    t.seed = run_seed;
    return t;
}

PretrainConfig ExperimentConfig::pretrain_config(std::size_t n_epochs) const {
    PretrainConfig p;
    p.epochs = n_epochs;
    p.batch_size = batch_size;
    p.optimizer = optimizer;
    p.seed = seed;
    return p;
}

ExperimentConfig to_experiment(const Config& c) {
    ExperimentConfig e;
    auto wrap = [](const std::string& key, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& ex) {
            throw ConfigError(key + ": " + ex.what());
        }
    };
    auto positive = [&](const std::string& key) {
        const auto v = c.get_uint(key);
        if (v == 0) throw ConfigError(key + " must be positive");
        return static_cast<std::size_t>(v);
    };

    e.dataset_name = c.get("dataset.name");
    if (e.dataset_name != "mnist" && e.dataset_name != "fashion-mnist" && e.dataset_name != "cifar10") {
        throw ConfigError("dataset.name: unknown dataset '" + e.dataset_name + "'");
    }
    e.dataset_dir = c.get("dataset.dir").empty() ? std::filesystem::path("data") / e.dataset_name
                                                 : std::filesystem::path(c.get("dataset.dir"));
    e.train_size = positive("dataset.train_size");
    e.test_size = positive("dataset.test_size");
    e.dataset_seed = c.get_uint("dataset.seed");

    wrap("model.hider", [&] { e.hider = parse_capacity(c.get("model.hider")); });
    wrap("model.seeker", [&] { e.seeker = parse_capacity(c.get("model.seeker")); });

    wrap("binary.mode", [&] { e.binary.mode = parse_threshold_mode(c.get("binary.mode")); });
    const auto& est = c.get("binary.estimator");
    if (est == "auto") {
        e.binary.estimator =
            e.binary.mode == ThresholdMode::deterministic ? Estimator::identity_st_bdn : Estimator::st1;
    } else {
        wrap("binary.estimator", [&] { e.binary.estimator = parse_estimator(est); });
    }
    e.binary.tau = c.get_double("binary.tau");
    e.binary.slope = c.get_double("binary.slope");
    e.binary.anneal_rate = c.get_double("binary.anneal_rate");
    e.binary.slope_max = c.get_double("binary.slope_max");
    e.binary.baseline_decay = c.get_double("binary.baseline_decay");
    e.binary.baseline_warmup = c.get_uint("binary.baseline_warmup");
    wrap("binary", [&] { e.binary.validate(); });

    e.init = parse_init_condition(c.get("init"));

    wrap("optimizer.kind", [&] { e.optimizer.kind = parse_optimizer_kind(c.get("optimizer.kind")); });
    e.optimizer.lr = c.get_double("optimizer.lr");
    if (!(e.optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");

    const auto& mode = c.get("alpha.mode");
    if (mode != "adaptive" && mode != "fixed") throw ConfigError("alpha.mode must be adaptive or fixed");
    e.alpha.adaptive = mode == "adaptive";
    e.alpha.initial = c.get_double("alpha.value");
    e.alpha.delta = c.get_double("alpha.delta");
    e.alpha.floor = c.get_double("alpha.floor");
    e.alpha.tolerance = c.get_double("alpha.tolerance");
    e.alpha.queue = c.get_uint("alpha.queue");
    e.alpha.running_mean = c.get_bool("alpha.running_mean");
    if (!e.alpha.adaptive) e.alpha.floor = std::min(e.alpha.floor, e.alpha.initial);
    wrap("alpha", [&] { e.alpha.validate(); });

    e.epochs = positive("train.epochs");
    e.batch_size = positive("train.batch_size");
    e.runs = positive("train.runs");
    e.seed = c.get_uint("train.seed");
    e.stop_when_optimal = c.get_bool("train.stop_when_optimal");
    e.stop_after_success = c.get_bool("train.stop_after_success");
    e.threads = c.get_uint("train.threads");

    e.pretrain_hider_epochs = c.get_uint("pretrain.hider_epochs");
    e.pretrain_seeker_epochs = c.get_uint("pretrain.seeker_epochs");
    e.output_dir = c.get("output.dir");
    e.pretrain_dir = c.get("pretrain.dir").empty() ? e.output_dir / "pretrained"
                                                   : std::filesystem::path(c.get("pretrain.dir"));
    return e;
}

}  // namespace hns
