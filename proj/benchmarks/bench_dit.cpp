#include <benchmark/benchmark.h>

#include "vmb/conditioning.hpp"
#include "vmb/dit.hpp"
#include "vmb/rng.hpp"

namespace {

vmb::Mat random_mat(Eigen::Index r, Eigen::Index c, uint64_t seed) {
  vmb::SeededRng rng(seed);
  vmb::Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

void BM_DitForward(benchmark::State& state) {
  vmb::ModelConfig config;
  config.n_layers = static_cast<int>(state.range(0));
  config.d_model = 64;
  config.n_heads = 4;
  config.d_latent = 64;
  config.d_text = 64;
  vmb::Parameters params = vmb::init_params(config, 1);
  vmb::Mat x = random_mat(32, config.d_latent, 2);
  vmb::ConditioningBundle cond;
  cond.text_tokens = random_mat(6, config.d_text, 3);
  cond.timestep_embed = vmb::timestep_embedding(0.5, config.d_model);
  for (auto _ : state) {
    vmb::Mat v = vmb::dit_forward(x, cond, 0.5, params, config);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_DitForward)->Arg(1)->Arg(2)->Arg(4);

void BM_ForwardBackward(benchmark::State& state) {
  vmb::ModelConfig config;
  config.n_layers = 2;
  config.d_model = 64;
  config.n_heads = 4;
  config.d_latent = 64;
  config.d_text = 64;
  vmb::Parameters params = vmb::init_params(config, 1);
  vmb::Mat x = random_mat(static_cast<Eigen::Index>(state.range(0)), config.d_latent, 2);
  vmb::Mat target = random_mat(x.rows(), config.d_latent, 4);
  vmb::ConditioningBundle cond;
  cond.text_tokens = random_mat(6, config.d_text, 3);
  cond.timestep_embed = vmb::timestep_embedding(0.5, config.d_model);
  for (auto _ : state) {
    vmb::Tape tape;
    vmb::Var v = vmb::dit_forward_tape(tape, x, cond, 0.5, params, config);
    vmb::Var loss = tape.mean_square(v, target);
    vmb::Gradients grads = tape.backward(loss);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(32);

}  // namespace
