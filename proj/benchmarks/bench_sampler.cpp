#include <benchmark/benchmark.h>

#include "vmb/diffusion.hpp"

namespace {

void BM_Sampler(benchmark::State& state) {
  // Denoiser cost excluded: measures the sampler's own arithmetic.
  vmb::VPredictor oracle = [](const vmb::LatentSequence& x, double t, bool) {
    auto [alpha, sigma] = vmb::alpha_sigma(t);
    return vmb::LatentSequence((alpha * x.data).eval());
  };
  vmb::SampleConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  cfg.cfg_scale = 1.0;
  cfg.frames = 32;
  cfg.d_latent = 64;
  for (auto _ : state) {
    vmb::LatentSequence out = vmb::sample(oracle, cfg);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_Sampler)->Arg(10)->Arg(100);

}  // namespace
