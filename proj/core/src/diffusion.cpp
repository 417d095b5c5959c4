#include "vmb/diffusion.hpp"

#include <cmath>
#include <string>

#include "vmb/errors.hpp"
#include "vmb/rng.hpp"

namespace vmb {

namespace {

void require_same_shape(const LatentSequence& a, const LatentSequence& b, const char* op) {
  if (a.frames() != b.frames() || a.dim() != b.dim()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.frames()) + "x" +
                     std::to_string(a.dim()) + " vs " + std::to_string(b.frames()) + "x" +
                     std::to_string(b.dim()) + ")");
  }
}

}  // namespace

AlphaSigma alpha_sigma(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw RangeError("alpha_sigma: t outside [0,1]: " + std::to_string(t));
  }
  return {std::cos(M_PI_2 * t), std::sin(M_PI_2 * t)};
}

LatentSequence add_noise(const LatentSequence& x0, const LatentSequence& eps, double t) {
  require_same_shape(x0, eps, "add_noise");
  auto [alpha, sigma] = alpha_sigma(t);
  return LatentSequence(alpha * x0.data + sigma * eps.data);
}

LatentSequence v_target(const LatentSequence& x0, const LatentSequence& eps, double t) {
  require_same_shape(x0, eps, "v_target");
  auto [alpha, sigma] = alpha_sigma(t);
  return LatentSequence(alpha * eps.data - sigma * x0.data);
}

std::pair<LatentSequence, LatentSequence> recover(const LatentSequence& x_t,
                                                  const LatentSequence& v, double t) {
  require_same_shape(x_t, v, "recover");
  auto [alpha, sigma] = alpha_sigma(t);
  LatentSequence x0_hat(alpha * x_t.data - sigma * v.data);
  LatentSequence eps_hat(sigma * x_t.data + alpha * v.data);
  return {std::move(x0_hat), std::move(eps_hat)};
}

double diffusion_loss(const LatentSequence& v_pred, const LatentSequence& v_true) {
  require_same_shape(v_pred, v_true, "diffusion_loss");
  return (v_pred.data - v_true.data).squaredNorm() /
         static_cast<double>(v_pred.data.size());
}

LatentSequence cfg_combine(const LatentSequence& v_uncond, const LatentSequence& v_cond,
                           double scale) {
  require_same_shape(v_uncond, v_cond, "cfg_combine");
  return LatentSequence((1.0 - scale) * v_uncond.data + scale * v_cond.data);
}

LatentSequence sample(const VPredictor& model, const SampleConfig& config) {
  if (config.steps < 1) throw ConfigError("sample: steps must be >= 1");
  if (!std::isfinite(config.cfg_scale)) throw ConfigError("sample: cfg_scale must be finite");
  if (config.frames < 1 || config.d_latent < 1) {
    throw ConfigError("sample: output shape must be positive");
  }

  SeededRng rng(config.seed);
  LatentSequence x;
  x.data.resize(config.frames, config.d_latent);
  for (Eigen::Index i = 0; i < config.frames; ++i) {
    for (Eigen::Index j = 0; j < config.d_latent; ++j) x.data(i, j) = rng.normal();
  }

  for (int n = config.steps; n >= 1; --n) {
    double t = static_cast<double>(n) / config.steps;
    double t_next = static_cast<double>(n - 1) / config.steps;
    LatentSequence v_cond = model(x, t, true);
    LatentSequence v = (config.cfg_scale == 1.0)
                           ? std::move(v_cond)
                           : cfg_combine(model(x, t, false), v_cond, config.cfg_scale);
    if (!v.data.allFinite()) {
      throw NumericalError("sample: non-finite model output at step " + std::to_string(n) +
                           " (t=" + std::to_string(t) + ")");
    }
    auto [x0_hat, eps_hat] = recover(x, v, t);
    auto [alpha_next, sigma_next] = alpha_sigma(t_next);
    x.data = alpha_next * x0_hat.data + sigma_next * eps_hat.data;
  }
  return x;
}

}  // namespace vmb
