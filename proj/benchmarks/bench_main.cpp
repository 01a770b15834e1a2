#include <benchmark/benchmark.h>

#include "pcbct/codec.hpp"
#include "pcbct/diffusion.hpp"
#include "pcbct/metrics.hpp"
#include "pcbct/nn/ops.hpp"
#include "pcbct/phantom.hpp"
#include "pcbct/tomography.hpp"

namespace {

pcbct::Image phantom_slice(int size) {
  pcbct::PhantomSpec spec;
  spec.height = spec.width = size;
  spec.n_slices = 1;
  return pcbct::generate_phantom(spec).slices.front();
}

void BM_Radon(benchmark::State& state) {
  const auto img = phantom_slice(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pcbct::radon(img, 360));
}
BENCHMARK(BM_Radon)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Fbp(benchmark::State& state) {
  const auto sino = pcbct::radon(phantom_slice(static_cast<int>(state.range(0))), 360);
  for (auto _ : state) benchmark::DoNotOptimize(pcbct::fbp(sino));
}
BENCHMARK(BM_Fbp)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  pcbct::Rng rng = pcbct::make_rng(1);
  pcbct::nn::Tensor x({2, c, 32, 32}), w({c, c, 3, 3}), b({c, 1, 1, 1});
  pcbct::fill_normal(rng, x.values());
  pcbct::fill_normal(rng, w.values());
  const auto xv = pcbct::nn::parameter(x), wv = pcbct::nn::parameter(w), bv = pcbct::nn::parameter(b);
  for (auto _ : state) {
    auto y = pcbct::nn::conv2d(xv, wv, bv, 1, 1);
    pcbct::nn::backward(pcbct::nn::sum_squared_error(y, pcbct::nn::constant(pcbct::nn::Tensor(y->shape()))));
  }
}
BENCHMARK(BM_Conv3x3)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DenoiserStep(benchmark::State& state) {
  const int h = static_cast<int>(state.range(0));
  pcbct::DenoiserConfig cfg;
  cfg.steps = 250;
  pcbct::DenoiserModel model(cfg);
  pcbct::nn::Adam adam(model.parameters().vars(), {});
  const auto schedule = pcbct::build_schedule(cfg.steps);
  pcbct::Rng rng = pcbct::make_rng(2);
  pcbct::nn::Tensor x({2, 1, h, h}), z({2, 1, h, h});
  for (auto _ : state) benchmark::DoNotOptimize(pcbct::training_step(model, adam, x, z, schedule, rng));
}
BENCHMARK(BM_DenoiserStep)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_CodecEncode(benchmark::State& state) {
  pcbct::CodecConfig cfg;
  cfg.factor = static_cast<int>(state.range(0));
  const pcbct::CodecModel model(cfg);
  const auto img = phantom_slice(64);
  for (auto _ : state) benchmark::DoNotOptimize(model.encode(img));
}
BENCHMARK(BM_CodecEncode)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto a = phantom_slice(128);
  auto b = a;
  for (auto& p : b.pixels) p = std::min(1000.0f, p + 5.0f);
  for (auto _ : state) benchmark::DoNotOptimize(pcbct::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
