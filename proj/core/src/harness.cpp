#include "hns/harness.hpp"

#include "hns/checkpoint.hpp"
#include "hns/images.hpp"
#include "hns/training.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

namespace hns {

namespace fs = std::filesystem;

namespace {

std::string number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_number(const std::string& s, const fs::path& path, std::size_t line) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
    }
    return v;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::uint64_t run_seed_mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + salt;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

BinaryLayerConfig binary_for_run(const ExperimentConfig& cfg, std::uint64_t seed) {
    BinaryLayerConfig b = cfg.binary;
    b.seed = run_seed_mix(seed, 0xb1a7ULL);
    return b;
}

class Logger {
public:
    explicit Logger(std::ostream& out) : out_(out) {}
    void line(const std::string& s) {
        std::lock_guard<std::mutex> lock(mu_);
        out_ << s << '\n';
        out_.flush();
    }

private:
    std::ostream& out_;
    std::mutex mu_;
};

}  // namespace

DataSplit load_experiment_data(const ExperimentConfig& cfg) {
    const auto train = load_named(cfg.dataset_name, cfg.dataset_dir, Split::train);
    const auto test = load_named(cfg.dataset_name, cfg.dataset_dir, Split::test);
    return {subset(train, cfg.train_size, cfg.dataset_seed), subset(test, cfg.test_size, cfg.dataset_seed + 1)};
}

std::size_t worker_count(std::size_t runs, std::size_t requested) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("HNS_THREADS")) {
        std::size_t cap = 0;
        const std::string s(env);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
        if (ec == std::errc() && p == s.data() + s.size() && cap > 0) n = std::min(n, cap);
    }
    return std::max<std::size_t>(1, std::min(n, runs));
}

PretrainReport cmd_pretrain(const ExperimentConfig& cfg, PretrainTarget target, std::ostream& log,
                            const DataSplit* data) {
    std::optional<DataSplit> owned;
    if (!data) data = &owned.emplace(load_experiment_data(cfg));
    fs::create_directories(cfg.pretrain_dir);
    PretrainReport report;

    if (target != PretrainTarget::seeker) {
        Hider hider(hider_spec(data->train.shape, cfg.hider), cfg.seed);
        std::ostringstream csv;
        csv << "epoch,mse\n";
        const auto r = pretrain_hider(hider, data->train, data->test, cfg.pretrain_config(cfg.pretrain_hider_epochs),
                                      [&](std::size_t e, double mse, double) {
                                          csv << e << ',' << number(mse) << '\n';
                                          log << "hider epoch " << e << " reconstruction mse " << mse << '\n';
                                      });
        save_hider(cfg.pretrain_dir / "hider.ckpt", hider);
        write_text(cfg.pretrain_dir / "hider_pretrain.csv", csv.str());
        report.hider_mse = r.final_mse;
        log << "hider test mse " << r.final_mse << '\n';
    }
    if (target != PretrainTarget::hider) {
        Seeker seeker(seeker_spec(data->train.shape, data->train.classes, cfg.seeker), cfg.seed);
        std::ostringstream csv;
        csv << "epoch,loss,accuracy\n";
        const auto r = pretrain_seeker(seeker, data->train, data->test,
                                       cfg.pretrain_config(cfg.pretrain_seeker_epochs),
                                       [&](std::size_t e, double loss, double acc) {
                                           csv << e << ',' << number(loss) << ',' << number(acc) << '\n';
                                           log << "seeker epoch " << e << " loss " << loss << " test accuracy "
                                               << acc << '\n';
                                       });
        save_seeker(cfg.pretrain_dir / "seeker.ckpt", seeker);
        write_text(cfg.pretrain_dir / "seeker_pretrain.csv", csv.str());
        nlohmann::json b = {{"accuracy", r.accuracy},
                            {"dataset", cfg.dataset_name},
                            {"train_size", cfg.train_size},
                            {"test_size", cfg.test_size},
                            {"seed", cfg.seed},
                            {"epochs", cfg.pretrain_seeker_epochs}};
        write_text(cfg.pretrain_dir / "baseline.json", b.dump(2) + "\n");
        report.baseline_accuracy = r.accuracy;
        log << "baseline accuracy " << r.accuracy << '\n';
    }
    return report;
}

double read_baseline(const fs::path& pretrain_dir) {
    const auto path = pretrain_dir / "baseline.json";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("no baseline at " + path.string() + "; run the pretrain command first");
    try {
        const double acc = nlohmann::json::parse(in).at("accuracy").get<double>();
        if (!(acc > 0.0)) throw std::runtime_error("baseline accuracy in " + path.string() + " is not positive");
        return acc;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corrupt " + path.string() + ": " + e.what());
    }
}

std::string format_metrics_row(const EpochRecord& r) {
    std::string row = std::to_string(r.epoch);
    for (double v : {r.alpha, r.slope, r.J, r.J_clf, r.J_mask, r.accuracy, r.fidelity, r.interpretability}) {
        row += ',' + number(v);
    }
    row += ',' + (r.fir ? number(*r.fir) : std::string());
    row += ',' + number(r.fii);
    return row;
}

std::vector<EpochRecord> read_metrics_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw std::runtime_error(path.string() + ": unexpected header");
    }
    std::vector<EpochRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 11) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 11 fields");
        EpochRecord r;
        r.epoch = static_cast<std::size_t>(parse_number(f[0], path, lineno));
        double* dst[] = {&r.alpha, &r.slope, &r.J, &r.J_clf, &r.J_mask, &r.accuracy, &r.fidelity, &r.interpretability};
        for (std::size_t k = 0; k < 8; ++k) *dst[k] = parse_number(f[k + 1], path, lineno);
        if (!f[9].empty()) r.fir = parse_number(f[9], path, lineno);
        r.fii = parse_number(f[10], path, lineno);
        out.push_back(r);
    }
    return out;
}

namespace {

void write_summary(const fs::path& dir, const ExperimentSummary& s) {
    write_text(dir / "summary.csv", format_summary_csv(s));
    write_text(dir / "summary.txt", format_summary_table(s));
}

void load_pretrained(const ExperimentConfig& cfg, HnsModel& model) {
    if (cfg.needs_pretrained_hider()) load_hider(cfg.pretrain_dir / "hider.ckpt", model.hider());
    if (cfg.needs_pretrained_seeker()) load_seeker(cfg.pretrain_dir / "seeker.ckpt", model.seeker());
}

RunMetrics execute_run(const ExperimentConfig& cfg, const DataSplit& data, double baseline, std::size_t index,
                       const fs::path& dir, Logger& log) {
    RunMetrics run;
    run.run = index;
    run.seed = cfg.seed + index;
    fs::create_directories(dir);

    HnsModel model(data.train.shape, data.train.classes, binary_for_run(cfg, run.seed), run.seed, cfg.hider,
                   cfg.seeker);
    load_pretrained(cfg, model);
    Trainer trainer(model, data.train, data.test, baseline, cfg.train_config(run.seed));
    trainer.set_snapshot_path(dir / "selected.ckpt");

    const auto csv_path = dir / "metrics.csv";
    write_text(csv_path, std::string(kMetricsHeader) + "\n");
    try {
        for (std::size_t e = 0; e < cfg.epochs; ++e) {
            const auto r = trainer.train_epoch();
            {
                std::ofstream out(csv_path, std::ios::binary | std::ios::app);
                out << format_metrics_row(r) << '\n';
            }
            run.epochs.push_back(r);
            std::ostringstream msg;
            msg << "run " << index << " epoch " << r.epoch << " alpha " << r.alpha << " accuracy " << r.accuracy
                << " fidelity " << r.fidelity << " interpretability " << r.interpretability;
            log.line(msg.str());
            if (cfg.stop_when_optimal && is_optimal(r.fidelity, r.interpretability)) break;
        }
    } catch (const TrainingAborted& e) {
        run.failed = true;
        run.failure = e.what();
        log.line("run " + std::to_string(index) + " aborted: " + e.what());
    }
    trainer.save(dir / "final.ckpt");

    nlohmann::json status = {{"run", run.run},
                             {"seed", run.seed},
                             {"failed", run.failed},
                             {"failure", run.failure},
                             {"epochs", run.epochs.size()},
                             {"alpha_drops", trainer.alpha().drops()}};
    if (!run.epochs.empty()) {
        status["collapse"] = to_string(run.collapse());
        status["optimal"] = run.optimal();
    }
    write_text(dir / "status.json", status.dump(2) + "\n");
    return run;
}

}  // namespace

TrainReport cmd_train(const ExperimentConfig& cfg, const std::string& effective_config, std::ostream& out,
                      const DataSplit* data) {
    const double baseline = read_baseline(cfg.pretrain_dir);
    if (cfg.needs_pretrained_hider() && !fs::exists(cfg.pretrain_dir / "hider.ckpt")) {
        throw std::runtime_error("init " + to_string(cfg.init) + " needs " + (cfg.pretrain_dir / "hider.ckpt").string());
    }
    if (cfg.needs_pretrained_seeker() && !fs::exists(cfg.pretrain_dir / "seeker.ckpt")) {
        throw std::runtime_error("init " + to_string(cfg.init) + " needs " +
                                 (cfg.pretrain_dir / "seeker.ckpt").string());
    }
    std::optional<DataSplit> owned;
    if (!data) data = &owned.emplace(load_experiment_data(cfg));
    fs::create_directories(cfg.output_dir);
    write_text(cfg.output_dir / "config.txt", effective_config);

    TrainReport report;
    std::vector<std::optional<RunMetrics>> results(cfg.runs);
    for (std::size_t i = 0; i < cfg.runs; ++i) {
        report.run_dirs.push_back(cfg.output_dir /
                                  ("run_" + std::to_string(i) + "_seed_" + std::to_string(cfg.seed + i)));
    }

    Logger log(out);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> success{false};
    std::mutex error_mu;
    std::exception_ptr error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfg.runs) return;
            if (cfg.stop_after_success && success.load()) continue;
            try {
                auto r = execute_run(cfg, *data, baseline, i, report.run_dirs[i], log);
                if (r.convergence_epoch()) success = true;
                results[i] = std::move(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    const std::size_t workers = worker_count(cfg.runs, cfg.threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);

    std::vector<fs::path> dirs;
    for (std::size_t i = 0; i < cfg.runs; ++i) {
        if (results[i]) {
            report.runs.push_back(std::move(*results[i]));
            dirs.push_back(report.run_dirs[i]);
        } else {
            ++report.skipped_runs;
        }
    }
    report.run_dirs = std::move(dirs);
    report.summary = summarize(report.runs);
    write_summary(cfg.output_dir, report.summary);
    out << format_summary_table(report.summary);
    if (report.skipped_runs) out << "skipped runs (an earlier run was optimal)  " << report.skipped_runs << '\n';
    return report;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream& out, const DataSplit* data) {
    std::optional<DataSplit> owned;
    if (!data) data = &owned.emplace(load_experiment_data(cfg));
    HnsModel model(data->test.shape, data->test.classes, binary_for_run(cfg, cfg.seed), cfg.seed, cfg.hider,
                   cfg.seeker);
    load_model(checkpoint, model);
    const auto e = evaluate(model, data->test, run_seed_mix(cfg.seed, 0xe7a1ULL));
    EvalReport r{e.accuracy, e.interpretability, std::nullopt};
    if (fs::exists(cfg.pretrain_dir / "baseline.json")) r.fidelity = fidelity(e.accuracy, read_baseline(cfg.pretrain_dir));
    out << "accuracy " << r.accuracy << '\n' << "interpretability " << r.interpretability << '\n';
    if (r.fidelity) {
        out << "fidelity " << *r.fidelity << '\n';
        if (const auto q = fir(*r.fidelity, r.interpretability)) out << "fir " << *q << '\n';
        out << "fii " << fii(*r.fidelity, r.interpretability) << '\n';
    }
    return r;
}

std::vector<fs::path> cmd_export_masks(const ExperimentConfig& cfg, const fs::path& checkpoint, std::size_t n,
                                       const fs::path& out_dir, std::ostream& out, const DataSplit* data) {
    std::optional<DataSplit> owned;
    if (!data) data = &owned.emplace(load_experiment_data(cfg));
    const Dataset& ds = data->test;
    if (n > ds.size()) {
        throw std::invalid_argument("cannot export " + std::to_string(n) + " masks from " + std::to_string(ds.size()) +
                                    " test samples");
    }
    HnsModel model(ds.shape, ds.classes, binary_for_run(cfg, cfg.seed), cfg.seed, cfg.hider, cfg.seeker);
    load_model(checkpoint, model);
    fs::create_directories(out_dir);

    NoGradGuard guard;
    NoiseSource noise(run_seed_mix(cfg.seed, 0xe7a1ULL));
    std::vector<fs::path> written;
    const std::size_t C = ds.shape.channels, H = ds.shape.height, W = ds.shape.width;
    const char* ext = C == 3 ? ".ppm" : ".pgm";
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx[1] = {i};
        const auto result = model.forward(ds.batch_images(idx), &noise);
        const auto image = ds.image(i);
        const auto mask = result.mask.data();
        const auto masked = result.masked_input.data();
        const std::string stem = std::to_string(i);
        auto write = [&](const std::string& name, std::span<const float> planar, std::size_t channels) {
            const auto bytes = to_bytes(planar, channels, H, W);
            const auto path = out_dir / (stem + "_" + name + (channels == 3 ? ".ppm" : ".pgm"));
            if (channels == 3) {
                write_ppm(path, W, H, bytes);
            } else {
                write_pgm(path, W, H, bytes);
            }
            written.push_back(path);
        };
        write("input", image, C);
        write("mask", mask, 1);
        write("masked", masked, C);
    }
    out << "wrote " << written.size() << " images (" << ext << " inputs) to " << out_dir.string() << '\n';
    return written;
}

EstimatorReport cmd_verify_estimators(const EstimatorSuiteConfig& cfg, std::ostream& out) {
    const auto report = run_estimator_suite(cfg);
    for (const auto& c : report.checks) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    }
    out << (report.all_passed() ? "all estimator checks passed" : "some estimator checks FAILED") << '\n';
    return report;
}

ExperimentSummary cmd_summarize(const fs::path& dir, std::ostream& out) {
    const std::regex pattern(R"(run_(\d+)_seed_(\d+))");
    std::vector<std::pair<std::size_t, fs::path>> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (entry.is_directory() && std::regex_match(name, m, pattern)) found.push_back({std::stoul(m[1]), entry.path()});
    }
    if (found.empty()) throw std::runtime_error("no run_<i>_seed_<s> directories under " + dir.string());
    std::sort(found.begin(), found.end());

    std::vector<RunMetrics> runs;
    for (const auto& [index, path] : found) {
        RunMetrics r;
        r.run = index;
        std::smatch m;
        const std::string name = path.filename().string();
        std::regex_match(name, m, pattern);
        r.seed = std::stoull(m[2]);
        r.epochs = read_metrics_csv(path / "metrics.csv");
        std::ifstream status(path / "status.json");
        if (status) {
            const auto j = nlohmann::json::parse(status);
            r.failed = j.value("failed", false);
            r.failure = j.value("failure", std::string());
        }
        runs.push_back(std::move(r));
    }
    const auto s = summarize(runs);
    write_summary(dir, s);
    out << format_summary_table(s);
    return s;
}

}  // namespace hns
