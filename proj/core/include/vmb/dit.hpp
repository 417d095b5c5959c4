#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vmb/embedding.hpp"
#include "vmb/latent.hpp"
#include "vmb/tape.hpp"

namespace vmb {

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_latent = 64;
  int d_text = 64;
  int max_text_tokens = 128;
  int control_layers = 1;  // replicated early layers in the control branch
  int d_style = 64;        // audio-embedding dim accepted by the stylization projection
  int max_frames = 256;    // learned position table length

  int d_ff() const { return 4 * d_model; }
  int head_dim() const { return d_model / n_heads; }
  // Throws ConfigError on non-positive sizes, d_model not divisible by
  // n_heads or odd, or control_layers outside [1, n_layers].
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Named trainable tensors plus a flat double view for gradient checking.
struct Parameters {
  std::map<std::string, Mat> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;

  size_t flat_size() const;
  double get_flat(size_t i) const;
  void set_flat(size_t i, double v);
  // name and flat offset of every tensor, in map (name) order.
  std::vector<std::pair<std::string, size_t>> flat_layout() const;
};

// Sinusoidal features over log-spaced frequencies; entries lie in [-1, 1]
// and the map is smooth in t. Requires even d_model.
Mat timestep_embedding(double t, int d_model);

// Coarse style condition derived from targeted retrieval.
struct StyleCondition {
  EmbeddingVector style_embedding;  // audio space, dim == config.d_style
  std::string attribute_text;
  Mat projected_rows;  // [1 x d_text], filled by build_style_condition
};

// Everything one denoiser evaluation is conditioned on.
struct ConditioningBundle {
  Mat text_tokens;         // [n_tokens x d_text]; zero rows = null conditioning
  Mat timestep_embed;      // [1 x d_model]
  std::optional<StyleCondition> style;
  std::optional<LatentSequence> control_latent;
};

// Seeded initialization: projections and the position table are normal with
// std 1/sqrt(d_model), norm gains one, every bias zero, and the stylization
// projection starts at zero. Creates the "base.*" and "style.*" tensor set.
Parameters init_params(const ModelConfig& config, uint64_t seed);

struct ControlFormerState;  // conditioning.hpp

// Records the denoiser on the tape and returns the v-prediction node.
// Pre-norm self-attention, cross-attention over
// [text tokens | projected timestep | optional style row], then a GELU MLP,
// all with residual connections; output shape equals the input latent shape.
// When `control` is non-null its per-layer outputs are added to the first
// control_layers hidden states (element-wise).
Var dit_forward_tape(Tape& tape, const Mat& x_t, const ConditioningBundle& cond, double t,
                     const Parameters& params, const ModelConfig& config,
                     const ControlFormerState* control = nullptr);

// Value-level forward for inference paths.
Mat dit_forward(const Mat& x_t, const ConditioningBundle& cond, double t,
                const Parameters& params, const ModelConfig& config);

// Pluggable text encoder stand-in.
class TextTokenProvider {
 public:
  virtual ~TextTokenProvider() = default;
  // [n_tokens x d_text] with n_tokens <= max_tokens.
  virtual Mat tokens(const std::string& text, int d_text, int max_tokens) const = 0;
};

// Per-word deterministic stub embeddings in the text space; whitespace
// tokenization, truncated to max_tokens. No padding rows: shorter prompts
// simply contribute fewer cross-attention keys.
class StubTextProvider : public TextTokenProvider {
 public:
  explicit StubTextProvider(uint64_t seed) : seed_(seed) {}
  Mat tokens(const std::string& text, int d_text, int max_tokens) const override;

 private:
  uint64_t seed_;
};

// Text tokens + timestep features for one denoiser call; style and control
// stay unset.
ConditioningBundle build_conditioning(const std::string& prompt, double t,
                                      const TextTokenProvider& provider,
                                      const ModelConfig& config);

}  // namespace vmb
