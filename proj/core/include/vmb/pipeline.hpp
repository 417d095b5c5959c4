#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vmb/checkpoint.hpp"
#include "vmb/diffusion.hpp"
#include "vmb/retrieval.hpp"

namespace vmb {

// Deterministic provider bundle standing in for the pretrained encoders and
// the audio codec. `seed` keys every stub embedding, `latent_seed` the
// synthetic latent source.
struct Providers {
  uint64_t seed = 0;
  uint64_t latent_seed = 0;

  Mat text_tokens(const std::string& text, const ModelConfig& config) const;
  // Joint-space (audio) embedding of an attribute description.
  EmbeddingVector attribute_embedding(const std::string& text, size_t dim) const;
  EmbeddingVector query_embedding(const std::string& text, EmbeddingSpace space,
                                  size_t dim) const;
  // Synthetic codec output for a track; one frame per second of duration.
  LatentSequence track_latent(const TrackRecord& record, Eigen::Index d_latent) const;
  LatentSequence track_latent_frames(const std::string& track_id, Eigen::Index frames,
                                     Eigen::Index d_latent) const;
};

// 100 x cosine similarity between joint-space embeddings.
double clap_score(const EmbeddingVector& text_embedding, const EmbeddingVector& audio_embedding);

// Attribute text as rendered into prompts and scoring queries
// ("fast" -> "fast tempo"; other categories pass the value through).
std::string attribute_text(TagCategory category, const std::string& value);

struct TrainConfig {
  int steps = 200;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::string optimizer = "sgdm";  // "sgdm" (default) or "adam"
  double p_style = 0.5;            // chance a step carries a targeted-retrieval style
  double cond_dropout = 0.1;       // chance a step trains the null-conditioning branch
  bool exclude_self = true;        // broad retrieval may not return the sample itself
  int frames = 16;                 // training latent length
  uint64_t seed = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_history;
};

// One optimizer step per iteration: sample a track, retrieve the control
// music by broad audio retrieval (self-excluded), assemble conditioning,
// draw (t, eps), and descend the v-prediction squared error.
TrainResult train(const DatasetManifest& manifest, const RetrievalIndex& index,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const Providers& providers);

struct GenerationRequest {
  std::string prompt;
  // Desired attribute per category; an empty value means "no control".
  std::map<TagCategory, std::string> attribute_controls;
  std::optional<std::string> reference_music_id;
  uint64_t seed = 0;
  int steps = kDefaultSampleSteps;
  double cfg_scale = kDefaultCfgScale;
  Eigen::Index frames = 32;
  EmbeddingSpace query_space = EmbeddingSpace::text;  // space used for broad retrieval

  void validate() const;
};

struct ControlSource {
  std::string kind;  // "broad", "reference" or "none"
  std::string track_id;
  double score = 0.0;
};

struct StyleSource {
  TagCategory category = TagCategory::genre;
  std::string subset;
  std::string attribute_text;
  std::string track_id;
  double score = 0.0;
  bool fallback_broad = false;  // subset was empty; the control track stood in
  bool used_for_conditioning = false;
};

struct GenerationTrace {
  std::string prompt;
  std::string prompt_final;
  ControlSource control;
  std::vector<StyleSource> styles;
  uint64_t seed = 0;
  int steps = 0;
  double cfg_scale = 0.0;
  Eigen::Index frames = 0;

  std::string to_json() const;
};

struct GenerationOutput {
  LatentSequence latent;
  GenerationTrace trace;
};

// Full generate flow: prompt augmentation per control, broad retrieval (or
// the user reference) for the control latent, targeted retrieval per
// partitioned control for style, then guided sampling. An empty targeted
// subset falls back to the control track and the fallback is recorded in
// the trace.
GenerationOutput generate(const GenerationRequest& request, const Checkpoint& checkpoint,
                          const RetrievalIndex& index, const Providers& providers);

// Maps a generated latent to a joint-space embedding for scoring.
class GenerationEmbedder {
 public:
  virtual ~GenerationEmbedder() = default;
  virtual EmbeddingVector embed(const LatentSequence& latent,
                                const GenerationTrace& trace) const = 0;
};

// Default proxy: mean-pool over frames, cycle to the store dimension,
// unit-normalize.
class LatentPoolEmbedder : public GenerationEmbedder {
 public:
  explicit LatentPoolEmbedder(size_t dim) : dim_(dim) {}
  EmbeddingVector embed(const LatentSequence& latent,
                        const GenerationTrace& trace) const override;

 private:
  size_t dim_;
};

struct EvalAttribute {
  TagCategory category = TagCategory::genre;
  std::string value;
};

struct EvalConfig {
  std::vector<EvalAttribute> attributes;  // empty -> first nonempty subset per partition
  int n_songs = 20;
  int n_variations = 10;
  int steps = 8;
  double cfg_scale = kDefaultCfgScale;
  Eigen::Index frames = 8;
  uint64_t seed = 0;
};

struct AttributeReport {
  TagCategory category = TagCategory::genre;
  std::string value;
  double delta_clap = 0.0;
  size_t count = 0;
  std::optional<double> mean_source_bpm;  // tempo proxy: manifest BPM of the style source
  bool skipped = false;
  std::string skip_reason;
};

struct EvalReport {
  std::vector<AttributeReport> attributes;
  int n_songs = 0;
  int n_variations = 0;
  uint64_t seed = 0;

  std::string to_json() const;
};

// For each attribute: sample songs, generate variation pairs with and
// without the control, and report the mean CLAP-score change against the
// attribute text. Attributes with an empty subset are skipped with a
// warning entry rather than failing the run.
EvalReport evaluate_controllability(const Checkpoint& checkpoint, const RetrievalIndex& index,
                                    const EvalConfig& config, const Providers& providers,
                                    const GenerationEmbedder& embedder);

}  // namespace vmb
