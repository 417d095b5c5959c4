#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include "vmb/latent.hpp"

namespace vmb {

// Variance-preserving trigonometric schedule on continuous t in [0, 1]:
// alpha(t) = cos(pi t / 2), sigma(t) = sin(pi t / 2), so alpha^2 + sigma^2
// is identically 1, alpha(0) = 1 and sigma(1) = 1.
struct AlphaSigma {
  double alpha = 0.0;
  double sigma = 0.0;
};

// Throws RangeError for t outside [0, 1].
AlphaSigma alpha_sigma(double t);

// x_t = alpha(t) x0 + sigma(t) eps, elementwise.
LatentSequence add_noise(const LatentSequence& x0, const LatentSequence& eps, double t);

// v = alpha(t) eps - sigma(t) x0.
LatentSequence v_target(const LatentSequence& x0, const LatentSequence& eps, double t);

// Algebraic inverse of (add_noise, v_target):
// x0_hat = alpha x_t - sigma v, eps_hat = sigma x_t + alpha v.
std::pair<LatentSequence, LatentSequence> recover(const LatentSequence& x_t,
                                                  const LatentSequence& v, double t);

// Mean squared error over all entries; zero iff equal.
double diffusion_loss(const LatentSequence& v_pred, const LatentSequence& v_true);

// Classifier-free guidance blend. Computed as (1-scale) u + scale c so the
// endpoints scale=0 and scale=1 reproduce a branch exactly.
LatentSequence cfg_combine(const LatentSequence& v_uncond, const LatentSequence& v_cond,
                           double scale);

constexpr double kDefaultCfgScale = 7.0;
constexpr int kDefaultSampleSteps = 100;

// One denoiser evaluation: (x_t, t, conditional_branch) -> v prediction.
using VPredictor =
    std::function<LatentSequence(const LatentSequence& x_t, double t, bool conditional)>;

struct SampleConfig {
  int steps = kDefaultSampleSteps;
  double cfg_scale = kDefaultCfgScale;
  uint64_t seed = 0;
  Eigen::Index frames = 32;
  Eigen::Index d_latent = 64;
};

// Deterministic ancestral-free v-prediction sampler: draws x at t=1 from a
// seeded generator, then walks a uniform descending grid t_n = n/steps,
// each step predicting v (with CFG), recovering (x0_hat, eps_hat) and
// re-noising to the next grid point. Returns the state at t=0.
// Throws NumericalError naming the step if the model emits non-finite
// values.
LatentSequence sample(const VPredictor& model, const SampleConfig& config);

}  // namespace vmb
