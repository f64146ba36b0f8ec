#include "hns/binary_units.hpp"
#include "hns/models.hpp"
#include "hns/ops.hpp"
#include "hns/training.hpp"

#include <benchmark/benchmark.h>

using namespace hns;

namespace {

Tensor<float> uniform(Shape s, std::uint64_t seed, bool requires_grad = false) {
    NoiseSource rng(seed);
    std::vector<float> v(numel(s));
    for (auto& x : v) x = static_cast<float>(rng.uniform() - 0.5);
    return Tensor<float>(std::move(s), std::move(v), requires_grad);
}

void BM_affine(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = uniform({n, 512}, 1), W = uniform({512, 256}, 2), b = uniform({256}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(affine(x, W, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_affine)->Arg(1)->Arg(64)->Arg(256);

void BM_conv2d(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = uniform({n, 32, 28, 28}, 1), k = uniform({64, 32, 3, 3}, 2), b = uniform({64}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, b, {1, 1}));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_conv2d)->Arg(1)->Arg(16);

void BM_conv2d_backward(benchmark::State& state) {
    auto x = uniform({16, 32, 28, 28}, 1, true), k = uniform({64, 32, 3, 3}, 2, true), b = uniform({64}, 3, true);
    for (auto _ : state) {
        x.zero_grad();
        k.zero_grad();
        b.zero_grad();
        sum(conv2d(x, k, b, {1, 1})).backward();
    }
}
BENCHMARK(BM_conv2d_backward);

void BM_train_step(benchmark::State& state) {
    Dataset ds;
    ds.shape = {1, 28, 28};
    ds.classes = 10;
    NoiseSource rng(4);
    const std::size_t n = 64;
    ds.images.resize(n * 784);
    for (auto& v : ds.images) v = static_cast<float>(rng.uniform());
    for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(i % 10));
    HnsModel model(ds.shape, 10, BinaryLayerConfig{}, 1);
    TrainConfig tc;
    tc.batch_size = 64;  // one update per epoch
    Trainer trainer(model, ds, ds, 0.9, tc);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.train_epoch());
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
