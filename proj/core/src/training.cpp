#include "hns/training.hpp"

#include "hns/checkpoint.hpp"
#include "hns/ops.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hns {

namespace {

void check_binary_mask(const Tensor<Real>& mask) {
    for (Real v : mask.data()) {
        if (v != Real(0) && v != Real(1)) {
            throw std::invalid_argument("joint_loss needs a binary mask, found value " + std::to_string(v));
        }
    }
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
}

Tensor<Real> reconstruction_target(const Tensor<Real>& x) { return x.dim(1) == 3 ? grayscale(x) : x; }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

JointLoss joint_loss(const Tensor<Real>& logits, std::span<const int> targets, const Tensor<Real>& mask,
                     double alpha) {
    check_alpha(alpha);
    check_binary_mask(mask);
    JointLoss out;
    out.J_clf = softmax_cross_entropy(logits, targets);
    // Each sample's mask is [1,H,W], so the mean over all elements is the
    // batch mean of the per-sample fraction passed.
    out.J_mask = mean(mask);
    out.J = add(scale(out.J_clf, static_cast<Real>(alpha)), scale(out.J_mask, static_cast<Real>(1.0 - alpha)));
    return out;
}

std::vector<Real> per_sample_cost(const Tensor<Real>& logits, std::span<const int> targets,
                                  const Tensor<Real>& mask, double alpha) {
    check_alpha(alpha);
    const auto ce = cross_entropy_per_sample(logits, targets);
    const std::size_t N = ce.size(), per = mask.size() / N;
    const auto m = mask.data();
    std::vector<Real> cost(N);
    for (std::size_t n = 0; n < N; ++n) {
        double passed = 0.0;
        for (std::size_t j = 0; j < per; ++j) passed += m[n * per + j];
        cost[n] = static_cast<Real>(alpha * ce[n] + (1.0 - alpha) * passed / static_cast<double>(per));
    }
    return cost;
}

void AlphaConfig::validate() const {
    check_alpha(initial);
    if (!(delta > 0.0)) throw std::invalid_argument("alpha.delta must be positive");
    if (!(floor >= 0.0 && floor <= initial)) throw std::invalid_argument("alpha.floor must lie in [0, alpha.value]");
    if (!(tolerance >= 0.0)) throw std::invalid_argument("alpha.tolerance must be non-negative");
    if (queue == 0) throw std::invalid_argument("alpha.queue must be positive");
}

AdaptiveAlpha::AdaptiveAlpha(AlphaConfig config) : config_(config), alpha_(config.initial) { config_.validate(); }

bool AdaptiveAlpha::is_stable(const std::deque<double>& queue, std::size_t capacity, double tolerance) {
    if (queue.size() < capacity) return false;
    double mean = 0.0;
    for (double v : queue) mean += v;
    mean /= static_cast<double>(queue.size());
    for (double v : queue) {
        if (std::abs(v - mean) > tolerance * mean) return false;
    }
    return true;
}

bool AdaptiveAlpha::update(double clf_loss) {
    if (!config_.adaptive) return false;
    double pushed = clf_loss;
    if (config_.running_mean) {
        running_sum_ += clf_loss;
        ++running_count_;
        pushed = running_sum_ / static_cast<double>(running_count_);
    }
    queue_.push_back(pushed);
    while (queue_.size() > config_.queue) queue_.pop_front();
    if (!is_stable(queue_, config_.queue, config_.tolerance)) return false;

    alpha_ = std::max(config_.floor, alpha_ - config_.delta);
    queue_.clear();
    running_sum_ = 0.0;
    running_count_ = 0;
    ++drops_;
    if (on_drop_) on_drop_(alpha_);
    return true;
}

void AdaptiveAlpha::restore(double alpha, std::deque<double> queue, std::size_t drops, double running_sum,
                            std::size_t running_count) {
    alpha_ = alpha;
    queue_ = std::move(queue);
    drops_ = drops;
    running_sum_ = running_sum;
    running_count_ = running_count;
}

double reconstruction_mse(const Hider& hider, const Dataset& ds, std::size_t batch_size) {
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& idx : sequential_batches(ds.size(), batch_size)) {
        const auto x = ds.batch_images(idx);
        total += static_cast<double>(mse(hider.probabilities(x), reconstruction_target(x)).item()) *
                 static_cast<double>(idx.size());
    }
    return total / static_cast<double>(ds.size());
}

double seeker_accuracy(const Seeker& seeker, const Dataset& ds, std::size_t batch_size) {
    NoGradGuard guard;
    std::size_t correct = 0;
    for (const auto& idx : sequential_batches(ds.size(), batch_size)) {
        const auto logits = seeker.forward(ds.batch_images(idx));
        const auto labels = ds.batch_labels(idx);
        const std::size_t K = logits.dim(1);
        const auto d = logits.data();
        for (std::size_t n = 0; n < idx.size(); ++n) {
            const auto row = d.subspan(n * K, K);
            if (static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == labels[n]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

HiderPretrainResult pretrain_hider(Hider& hider, const Dataset& train, const Dataset& eval,
                                   const PretrainConfig& config, const EpochLog& log) {
    Optimizer<Real> opt(config.optimizer, tensors_of(hider.parameters()));
    HiderPretrainResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        for (const auto& idx : batches(train.size(), config.batch_size, mix(config.seed, epoch))) {
            const auto x = train.batch_images(idx);
            opt.zero_grad();
            auto loss = mse(hider.probabilities(x), reconstruction_target(x));
            const double value = loss.item();
            if (!std::isfinite(value)) throw TrainingAborted("non-finite reconstruction loss in hider pretraining");
            loss.backward();
            opt.step();
            total += value * static_cast<double>(idx.size());
        }
        result.epoch_mse.push_back(total / static_cast<double>(train.size()));
        if (log) log(epoch + 1, result.epoch_mse.back(), result.epoch_mse.back());
    }
    result.final_mse = reconstruction_mse(hider, eval);
    return result;
}

SeekerPretrainResult pretrain_seeker(Seeker& seeker, const Dataset& train, const Dataset& test,
                                     const PretrainConfig& config, const EpochLog& log) {
    Optimizer<Real> opt(config.optimizer, tensors_of(seeker.parameters()));
    SeekerPretrainResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        for (const auto& idx : batches(train.size(), config.batch_size, mix(config.seed, epoch))) {
            const auto labels = train.batch_labels(idx);
            opt.zero_grad();
            auto loss = softmax_cross_entropy(seeker.forward(train.batch_images(idx)), std::span<const int>(labels));
            const double value = loss.item();
            if (!std::isfinite(value)) throw TrainingAborted("non-finite loss in seeker pretraining");
            loss.backward();
            opt.step();
            total += value * static_cast<double>(idx.size());
        }
        result.epoch_loss.push_back(total / static_cast<double>(train.size()));
        if (log) log(epoch + 1, result.epoch_loss.back(), seeker_accuracy(seeker, test));
    }
    result.accuracy = seeker_accuracy(seeker, test);
    return result;
}

Evaluation evaluate(HnsModel& model, const Dataset& ds, std::uint64_t noise_seed, std::size_t batch_size) {
    NoGradGuard guard;
    NoiseSource noise(noise_seed);
    std::size_t correct = 0;
    double hidden = 0.0;
    for (const auto& idx : sequential_batches(ds.size(), batch_size)) {
        const auto out = model.forward(ds.batch_images(idx), &noise);
        const auto labels = ds.batch_labels(idx);
        const std::size_t K = out.logits.dim(1);
        const auto d = out.logits.data();
        for (std::size_t n = 0; n < idx.size(); ++n) {
            const auto row = d.subspan(n * K, K);
            if (static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == labels[n]) ++correct;
        }
        hidden += interpretability(out.mask) * static_cast<double>(idx.size());
    }
    return {static_cast<double>(correct) / static_cast<double>(ds.size()), hidden / static_cast<double>(ds.size())};
}

Trainer::Trainer(HnsModel& model, const Dataset& train, const Dataset& test, double baseline_accuracy,
                 TrainConfig config)
    : model_(model),
      train_(train),
      test_(test),
      baseline_(baseline_accuracy),
      config_(config),
      hider_opt_(config.optimizer, tensors_of(model.hider().parameters())),
      seeker_opt_(config.optimizer, tensors_of(model.seeker().parameters())),
      alpha_(config.alpha) {
    if (!(baseline_accuracy > 0.0)) throw std::invalid_argument("Trainer needs a positive baseline accuracy");
    if (!(train.shape == model.input_shape()) || !(test.shape == model.input_shape())) {
        throw std::invalid_argument("dataset image shape does not match the model input");
    }
    alpha_.on_drop([this](double) { take_snapshot(); });
}

void Trainer::take_snapshot() {
    const auto params = model_.parameters();
    snapshot_.clear();
    for (const auto& p : params) {
        const auto d = p.tensor.data();
        snapshot_.emplace_back(d.begin(), d.end());
    }
    ++snapshot_count_;
    if (!snapshot_path_.empty()) save_model(snapshot_path_, model_);
}

EpochRecord Trainer::train_epoch() {
    const std::size_t epoch = history_.size() + 1;
    const auto plan = batches(train_.size(), config_.batch_size, mix(config_.seed, epoch));
    const bool reinforce = is_reinforce(model_.binary().config().estimator);
    double sum_J = 0.0, sum_clf = 0.0, sum_mask = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
        const auto& idx = plan[b];
        const auto x = train_.batch_images(idx);
        const auto labels = train_.batch_labels(idx);
        const double alpha = alpha_.alpha();

        hider_opt_.zero_grad();
        seeker_opt_.zero_grad();
        const auto out = model_.forward(x);
        const auto loss = joint_loss(out.logits, labels, out.mask, alpha);
        const double J = loss.J.item(), clf = loss.J_clf.item(), passed = loss.J_mask.item();
        if (!std::isfinite(J) || !std::isfinite(clf)) {
            std::ostringstream msg;
            msg << "non-finite loss at epoch " << epoch << ", batch " << b << " (alpha=" << alpha
                << ", J=" << J << ", J_clf=" << clf << ")";
            throw TrainingAborted(msg.str());
        }
        if (reinforce) {
            const auto cost = per_sample_cost(out.logits, labels, out.mask, alpha);
            model_.binary().set_sample_costs(cost);
        }
        Tensor<Real>(loss.J).backward();
        hider_opt_.step();
        seeker_opt_.step();
        ++updates_;
        model_.binary().on_update(plan.size());
        alpha_.update(clf);

        const double n = static_cast<double>(idx.size());
        sum_J += J * n;
        sum_clf += clf * n;
        sum_mask += passed * n;
        seen += idx.size();
    }
    const double denom = static_cast<double>(seen);
    const auto eval = evaluate(model_, test_, mix(config_.seed, 0xe7a1ULL + epoch));
    auto record = make_epoch_record(epoch, alpha_.alpha(), model_.binary().slope(), sum_J / denom, sum_clf / denom,
                                    sum_mask / denom, eval.accuracy, eval.interpretability, baseline_);
    history_.push_back(record);
    return record;
}

namespace {

nlohmann::json record_to_json(const EpochRecord& r) {
    nlohmann::json j = {{"epoch", r.epoch},     {"alpha", r.alpha},       {"slope", r.slope},
                        {"J", r.J},             {"J_clf", r.J_clf},       {"J_mask", r.J_mask},
                        {"accuracy", r.accuracy}, {"fidelity", r.fidelity}, {"interpretability", r.interpretability},
                        {"fii", r.fii}};
    j["fir"] = r.fir ? nlohmann::json(*r.fir) : nlohmann::json(nullptr);
    return j;
}

EpochRecord record_from_json(const nlohmann::json& j) {
    EpochRecord r;
    r.epoch = j.at("epoch");
    r.alpha = j.at("alpha");
    r.slope = j.at("slope");
    r.J = j.at("J");
    r.J_clf = j.at("J_clf");
    r.J_mask = j.at("J_mask");
    r.accuracy = j.at("accuracy");
    r.fidelity = j.at("fidelity");
    r.interpretability = j.at("interpretability");
    r.fii = j.at("fii");
    if (!j.at("fir").is_null()) r.fir = j.at("fir").get<double>();
    return r;
}

void append_moments(std::vector<Blob>& blobs, const std::string& prefix, const Optimizer<Real>& opt) {
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
        const Shape shape = opt.params()[i].shape();
        const auto& m = opt.first_moments()[i];
        const auto& v = opt.second_moments()[i];
        blobs.push_back({prefix + ".m." + std::to_string(i), shape, std::vector<float>(m.begin(), m.end())});
        blobs.push_back({prefix + ".v." + std::to_string(i), shape, std::vector<float>(v.begin(), v.end())});
    }
}

void load_moments(const CheckpointFile& file, const std::string& prefix, Optimizer<Real>& opt) {
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
        for (auto [tag, dst] : {std::pair{".m.", &opt.first_moments()[i]}, std::pair{".v.", &opt.second_moments()[i]}}) {
            const Blob* b = file.find(prefix + tag + std::to_string(i));
            if (!b || b->values.size() != opt.params()[i].size()) {
                throw CheckpointError("checkpoint lacks optimizer state " + prefix + tag + std::to_string(i));
            }
            dst->assign(b->values.begin(), b->values.end());
        }
    }
}

}  // namespace

void Trainer::save(const std::filesystem::path& path) const {
    CheckpointFile file{model_.digest(), to_blobs(model_.parameters())};
    append_moments(file.blobs, "opt.hider", hider_opt_);
    append_moments(file.blobs, "opt.seeker", seeker_opt_);
    write_checkpoint(path, file);

    auto& binary = const_cast<HnsModel&>(model_).binary();
    nlohmann::json state;
    state["epoch"] = history_.size();
    state["updates"] = updates_;
    state["seed"] = config_.seed;
    state["optimizer_steps"] = {hider_opt_.step_count(), seeker_opt_.step_count()};
    state["alpha"] = {{"value", alpha_.alpha()},
                      {"queue", std::vector<double>(alpha_.queue().begin(), alpha_.queue().end())},
                      {"drops", alpha_.drops()},
                      {"running_sum", alpha_.running_sum()},
                      {"running_count", alpha_.running_count()}};
    state["binary"] = {{"slope", binary.slope()},
                       {"noise_counter", binary.noise().counter()},
                       {"baseline_numerator", binary.baseline().numerator()},
                       {"baseline_denominator", binary.baseline().denominator()},
                       {"baseline_samples", binary.baseline().samples_seen()}};
    state["snapshot_count"] = snapshot_count_;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& r : history_) hist.push_back(record_to_json(r));
    state["history"] = hist;

    std::ofstream out(path.string() + ".state.json", std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string() + ".state.json");
    // Doubles are written with round-trip precision.
    out << state.dump(2) << '\n';
}

void Trainer::restore(const std::filesystem::path& path) {
    const auto file = read_checkpoint(path);
    if (file.digest != model_.digest()) throw CheckpointVersionError("checkpoint architecture digest mismatch");
    load_blobs(file, model_.parameters());
    load_moments(file, "opt.hider", hider_opt_);
    load_moments(file, "opt.seeker", seeker_opt_);

    std::ifstream in(path.string() + ".state.json");
    if (!in) throw CheckpointError("missing " + path.string() + ".state.json");
    nlohmann::json state;
    try {
        state = nlohmann::json::parse(in);
        if (state.at("seed").get<std::uint64_t>() != config_.seed) {
            throw CheckpointError("checkpoint was written by a run with a different seed");
        }
        updates_ = state.at("updates");
        hider_opt_.set_step_count(state.at("optimizer_steps").at(0));
        seeker_opt_.set_step_count(state.at("optimizer_steps").at(1));
        const auto& a = state.at("alpha");
        const auto q = a.at("queue").get<std::vector<double>>();
        alpha_.restore(a.at("value"), std::deque<double>(q.begin(), q.end()), a.at("drops"), a.at("running_sum"),
                       a.at("running_count"));
        const auto& bs = state.at("binary");
        auto& binary = model_.binary();
        binary.set_slope(bs.at("slope"));
        binary.noise().set_counter(bs.at("noise_counter"));
        const auto num = bs.at("baseline_numerator").get<std::vector<double>>();
        const auto den = bs.at("baseline_denominator").get<std::vector<double>>();
        binary.baseline() = ReinforceBaseline(num.size(), binary.config().baseline_decay,
                                              binary.config().baseline_warmup);
        binary.baseline().numerator() = num;
        binary.baseline().denominator() = den;
        binary.baseline().set_samples_seen(bs.at("baseline_samples"));
        snapshot_count_ = state.at("snapshot_count");
        history_.clear();
        for (const auto& r : state.at("history")) history_.push_back(record_from_json(r));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt training state: ") + e.what());
    }
}

}  // namespace hns
