#include "vmb/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vmb/errors.hpp"
#include "vmb/rng.hpp"

namespace vmb {

using nlohmann::json;

Mat Providers::text_tokens(const std::string& text, const ModelConfig& config) const {
  StubTextProvider provider(seed);
  return provider.tokens(text, config.d_text, config.max_text_tokens);
}

EmbeddingVector Providers::attribute_embedding(const std::string& text, size_t dim) const {
  return stub_embed(text, EmbeddingSpace::audio, dim, seed);
}

EmbeddingVector Providers::query_embedding(const std::string& text, EmbeddingSpace space,
                                           size_t dim) const {
  return stub_embed(text, space, dim, seed);
}

LatentSequence Providers::track_latent(const TrackRecord& record, Eigen::Index d_latent) const {
  // Synthetic codec convention: one latent frame per second, clamped.
  Eigen::Index frames = static_cast<Eigen::Index>(std::llround(record.duration_s));
  frames = std::clamp<Eigen::Index>(frames <= 0 ? 16 : frames, 1, 256);
  return synthetic_latent(record.id, frames, d_latent, latent_seed);
}

LatentSequence Providers::track_latent_frames(const std::string& track_id, Eigen::Index frames,
                                              Eigen::Index d_latent) const {
  return synthetic_latent(track_id, frames, d_latent, latent_seed);
}

double clap_score(const EmbeddingVector& text_embedding, const EmbeddingVector& audio_embedding) {
  return 100.0 * cosine_similarity(text_embedding, audio_embedding);
}

std::string attribute_text(TagCategory category, const std::string& value) {
  if (value.empty()) return value;
  if (category == TagCategory::tempo) return value + " tempo";
  return value;
}

namespace {

Mat normal_mat(SeededRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Decoupled weight decay plus either momentum SGD (default) or Adam,
// applied to every tensor that received a gradient this step.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config) : config_(config) {
    if (config.optimizer != "sgdm" && config.optimizer != "adam") {
      throw ConfigError("train: unknown optimizer \"" + config.optimizer + "\"");
    }
  }

  void step(Parameters& params, Parameters& control, const Gradients& grads) {
    ++t_;
    for (const auto& [name, grad] : grads) {
      Mat* tensor = nullptr;
      if (params.has(name)) {
        tensor = &params.at(name);
      } else if (control.has(name)) {
        tensor = &control.at(name);
      } else {
        throw StateError("optimizer: gradient for unknown tensor \"" + name + "\"");
      }
      if (config_.optimizer == "adam") {
        adam_update(name, *tensor, grad);
      } else {
        sgdm_update(name, *tensor, grad);
      }
      if (config_.weight_decay != 0.0) {
        *tensor -= (config_.lr * config_.weight_decay) * *tensor;
      }
    }
  }

 private:
  void sgdm_update(const std::string& name, Mat& tensor, const Mat& grad) {
    Mat& v = slot(velocity_, name, grad);
    v = config_.momentum * v + grad;
    tensor -= config_.lr * v;
  }

  void adam_update(const std::string& name, Mat& tensor, const Mat& grad) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Mat& m = slot(moment1_, name, grad);
    Mat& v = slot(moment2_, name, grad);
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    double bc1 = 1.0 - std::pow(b1, t_);
    double bc2 = 1.0 - std::pow(b2, t_);
    Mat mhat = m / bc1;
    Mat vhat = v / bc2;
    tensor -= config_.lr * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                              Mat::Constant(vhat.rows(), vhat.cols(), eps));
  }

  static Mat& slot(std::map<std::string, Mat>& store, const std::string& name, const Mat& like) {
    auto it = store.find(name);
    if (it == store.end()) {
      it = store.emplace(name, Mat::Zero(like.rows(), like.cols())).first;
    }
    return it->second;
  }

  TrainConfig config_;
  int t_ = 0;
  std::map<std::string, Mat> velocity_;
  std::map<std::string, Mat> moment1_;
  std::map<std::string, Mat> moment2_;
};

std::vector<const TrackRecord*> retrievable_tracks(const DatasetManifest& manifest,
                                                   const RetrievalIndex& index) {
  std::vector<const TrackRecord*> out;
  auto view = index.broad.find(EmbeddingSpace::audio);
  if (view == index.broad.end()) return out;
  for (const TrackRecord& r : manifest.records) {
    if (view->second.count(r.id)) out.push_back(&r);
  }
  return out;
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const RetrievalIndex& index,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const Providers& providers) {
  model_config.validate();
  if (train_config.steps < 1) throw ConfigError("train: steps must be >= 1");
  if (train_config.frames < 1 || train_config.frames > model_config.max_frames) {
    throw ConfigError("train: frames outside [1, max_frames]");
  }
  if (manifest.records.size() != index.manifest.records.size()) {
    throw ValidationError("train: manifest and index disagree on record count");
  }
  for (const TrackRecord& r : manifest.records) {
    if (!index.manifest.find(r.id)) {
      throw ValidationError("train: track \"" + r.id + "\" missing from index");
    }
  }
  std::vector<const TrackRecord*> tracks = retrievable_tracks(manifest, index);
  if (tracks.empty()) throw ValidationError("train: no tracks with audio embeddings");

  Parameters params = init_params(model_config, train_config.seed);
  ControlFormerState control =
      init_controlformer(params, model_config, model_config.control_layers);
  Optimizer opt(train_config);
  SeededRng rng(derive_seed(train_config.seed, fnv1a64("train")));

  const EmbeddingStore& audio_store = manifest.store(EmbeddingSpace::audio);
  TrainResult result;
  result.loss_history.reserve(static_cast<size_t>(train_config.steps));

  for (int step = 0; step < train_config.steps; ++step) {
    const TrackRecord& track = *tracks[rng.below(tracks.size())];
    LatentSequence x0 =
        providers.track_latent_frames(track.id, train_config.frames, model_config.d_latent);

    // Control music from broad audio->audio retrieval; the sample itself is
    // excluded unless the config says otherwise.
    std::optional<LatentSequence> control_latent;
    const EmbeddingVector& track_audio = audio_store.at(track.audio_embedding_id);
    if (!train_config.exclude_self || tracks.size() > 1) {
      std::vector<RetrievalResult> hits =
          train_config.exclude_self
              ? broad_retrieve_excluding(track_audio, EmbeddingSpace::audio, index, track.id)
              : broad_retrieve(track_audio, EmbeddingSpace::audio, index);
      const TrackRecord* src = manifest.find(hits[0].track_id);
      if (src) control_latent = providers.track_latent(*src, model_config.d_latent);
    }

    bool drop_cond = rng.uniform01() < train_config.cond_dropout;
    bool want_style = rng.uniform01() < train_config.p_style;
    double t = rng.uniform01();

    ConditioningBundle cond;
    cond.timestep_embed = timestep_embedding(t, model_config.d_model);
    cond.control_latent = control_latent;
    if (drop_cond) {
      cond.text_tokens = Mat(0, model_config.d_text);
    } else {
      cond.text_tokens = providers.text_tokens(track.description, model_config);
      if (want_style) {
        // Style source: the track's own top tag in a partitioned category.
        for (TagCategory cat : kPartitionCategories) {
          auto it = track.tags.find(cat);
          if (it == track.tags.end() || it->second.empty()) continue;
          const std::string& tag = it->second.front();
          try {
            RetrievalResult hit =
                targeted_retrieve(attribute_text(cat, tag), cat, tag, index,
                                  StubAttributeEmbedder(audio_store.dim(), providers.seed));
            StyleCondition style;
            style.style_embedding = index.embedding_of(EmbeddingSpace::audio, hit.track_id);
            style.attribute_text = attribute_text(cat, tag);
            cond.style = std::move(style);
          } catch (const PartitionError&) {
            // No usable subset; train without style this step.
          }
          break;
        }
      }
    }

    Mat eps = normal_mat(rng, train_config.frames, model_config.d_latent);
    LatentSequence eps_seq(eps);
    LatentSequence x_t = add_noise(x0, eps_seq, t);
    LatentSequence v_true = v_target(x0, eps_seq, t);

    Tape tape;
    Var v_pred = dit_forward_tape(tape, x_t.data, cond, t, params, model_config, &control);
    Var loss = tape.mean_square(v_pred, v_true.data);
    result.loss_history.push_back(tape.value(loss)(0, 0));
    Gradients grads = tape.backward(loss);
    opt.step(params, control.params, grads);
  }

  result.checkpoint = Checkpoint{model_config, std::move(params), std::move(control)};
  return result;
}

void GenerationRequest::validate() const {
  if (steps < 1) throw ValidationError("generate: steps must be >= 1");
  if (!std::isfinite(cfg_scale)) throw ValidationError("generate: cfg_scale must be finite");
  if (frames < 1) throw ValidationError("generate: frames must be >= 1");
}

std::string GenerationTrace::to_json() const {
  json j;
  j["prompt"] = prompt;
  j["prompt_final"] = prompt_final;
  j["control"] = {{"kind", control.kind}, {"track_id", control.track_id},
                  {"score", control.score}};
  json styles_j = json::array();
  for (const StyleSource& s : styles) {
    styles_j.push_back({{"category", to_string(s.category)},
                        {"subset", s.subset},
                        {"attribute_text", s.attribute_text},
                        {"track_id", s.track_id},
                        {"score", s.score},
                        {"fallback_broad", s.fallback_broad},
                        {"used_for_conditioning", s.used_for_conditioning}});
  }
  j["styles"] = styles_j;
  j["seed"] = seed;
  j["steps"] = steps;
  j["cfg_scale"] = cfg_scale;
  j["frames"] = static_cast<int64_t>(frames);
  return j.dump(2);
}

GenerationOutput generate(const GenerationRequest& request, const Checkpoint& checkpoint,
                          const RetrievalIndex& index, const Providers& providers) {
  request.validate();
  const ModelConfig& config = checkpoint.config;
  config.validate();
  if (request.frames > config.max_frames) {
    throw ValidationError("generate: frames exceed the model's max_frames");
  }

  GenerationTrace trace;
  trace.prompt = request.prompt;
  trace.seed = request.seed;
  trace.steps = request.steps;
  trace.cfg_scale = request.cfg_scale;
  trace.frames = request.frames;

  std::string prompt_final = request.prompt;
  for (const auto& [cat, value] : request.attribute_controls) {
    if (value.empty()) continue;
    prompt_final = append_attribute_prompt(prompt_final, attribute_text(cat, value));
  }
  trace.prompt_final = prompt_final;

  // Control source: user reference wins; otherwise broad retrieval over the
  // requested query space.
  const TrackRecord* control_track = nullptr;
  if (request.reference_music_id) {
    control_track = index.manifest.find(*request.reference_music_id);
    if (!control_track) {
      throw ValidationError("generate: reference music id \"" + *request.reference_music_id +
                            "\" not in the retrieval database");
    }
    trace.control = {"reference", control_track->id, 0.0};
  } else {
    const EmbeddingStore& store = index.manifest.store(request.query_space);
    EmbeddingVector query =
        providers.query_embedding(prompt_final, request.query_space, store.dim());
    std::vector<RetrievalResult> hits = broad_retrieve(query, request.query_space, index);
    control_track = index.manifest.find(hits[0].track_id);
    if (!control_track) {
      throw ValidationError("generate: retrieved track \"" + hits[0].track_id +
                            "\" missing from manifest");
    }
    trace.control = {"broad", control_track->id, hits[0].score};
  }

  std::optional<LatentSequence> control_latent =
      providers.track_latent(*control_track, config.d_latent);

  // Targeted retrieval per partitioned control; the first hit conditions the
  // model, every hit lands in the trace.
  const EmbeddingStore& audio_store = index.manifest.store(EmbeddingSpace::audio);
  std::optional<StyleCondition> style;
  for (const auto& [cat, value] : request.attribute_controls) {
    if (value.empty()) continue;
    if (std::find(kPartitionCategories.begin(), kPartitionCategories.end(), cat) ==
        kPartitionCategories.end()) {
      continue;  // prompt-only control (instrument has no partition)
    }
    std::string attr = attribute_text(cat, value);
    StyleSource source;
    source.category = cat;
    source.subset = value;
    source.attribute_text = attr;
    try {
      RetrievalResult hit = targeted_retrieve(
          attr, cat, value, index, StubAttributeEmbedder(audio_store.dim(), providers.seed));
      source.track_id = hit.track_id;
      source.score = hit.score;
    } catch (const EmptyPartitionError&) {
      source.track_id = control_track->id;
      source.fallback_broad = true;
    }
    if (!style) {
      style = StyleCondition{};
      style->style_embedding = index.embedding_of(EmbeddingSpace::audio, source.track_id);
      style->attribute_text = attr;
      source.used_for_conditioning = true;
    }
    trace.styles.push_back(std::move(source));
  }

  Mat text = providers.text_tokens(prompt_final, config);
  const ControlFormerState* control_state =
      checkpoint.control ? &*checkpoint.control : nullptr;

  VPredictor model = [&](const LatentSequence& x, double t, bool conditional) {
    ConditioningBundle cond;
    cond.timestep_embed = timestep_embedding(t, config.d_model);
    cond.control_latent = control_latent;
    if (conditional) {
      cond.text_tokens = text;
      cond.style = style;
    } else {
      cond.text_tokens = Mat(0, config.d_text);
    }
    Tape tape;
    Var v = dit_forward_tape(tape, x.data, cond, t, checkpoint.params, config, control_state);
    return LatentSequence(tape.value(v));
  };

  SampleConfig sample_config;
  sample_config.steps = request.steps;
  sample_config.cfg_scale = request.cfg_scale;
  sample_config.seed = request.seed;
  sample_config.frames = request.frames;
  sample_config.d_latent = config.d_latent;

  GenerationOutput out;
  out.latent = sample(model, sample_config);
  out.trace = std::move(trace);
  return out;
}

EmbeddingVector LatentPoolEmbedder::embed(const LatentSequence& latent,
                                          const GenerationTrace& trace) const {
  (void)trace;
  latent.check();
  Mat pooled = latent.data.colwise().mean();
  EmbeddingVector out;
  out.space = EmbeddingSpace::audio;
  out.values.resize(dim_);
  for (size_t i = 0; i < dim_; ++i) {
    out.values[i] = pooled(0, static_cast<Eigen::Index>(i % static_cast<size_t>(pooled.cols())));
  }
  return normalize(out);
}

std::string EvalReport::to_json() const {
  json j;
  j["n_songs"] = n_songs;
  j["n_variations"] = n_variations;
  j["seed"] = seed;
  json attrs = json::array();
  for (const AttributeReport& a : attributes) {
    json e;
    e["category"] = to_string(a.category);
    e["value"] = a.value;
    if (a.skipped) {
      e["skipped"] = true;
      e["reason"] = a.skip_reason;
    } else {
      e["delta_clap"] = a.delta_clap;
      e["count"] = a.count;
      if (a.mean_source_bpm) e["mean_source_bpm"] = *a.mean_source_bpm;
    }
    attrs.push_back(e);
  }
  j["attributes"] = attrs;
  return j.dump(2);
}

EvalReport evaluate_controllability(const Checkpoint& checkpoint, const RetrievalIndex& index,
                                    const EvalConfig& config, const Providers& providers,
                                    const GenerationEmbedder& embedder) {
  if (config.n_songs < 1 || config.n_variations < 1) {
    throw ConfigError("eval: n_songs and n_variations must be positive");
  }
  std::vector<EvalAttribute> attributes = config.attributes;
  if (attributes.empty()) {
    // Default: the first nonempty subset of every partitioned category.
    for (TagCategory cat : kPartitionCategories) {
      auto part = index.partitions.find(cat);
      if (part == index.partitions.end()) continue;
      for (const auto& [subset, ids] : part->second) {
        if (!ids.empty()) {
          attributes.push_back({cat, subset});
          break;
        }
      }
    }
  }

  std::vector<const TrackRecord*> tracks = retrievable_tracks(index.manifest, index);
  if (tracks.empty()) throw ValidationError("eval: no tracks with audio embeddings");
  const EmbeddingStore& audio_store = index.manifest.store(EmbeddingSpace::audio);

  EvalReport report;
  report.n_songs = config.n_songs;
  report.n_variations = config.n_variations;
  report.seed = config.seed;

  for (size_t ai = 0; ai < attributes.size(); ++ai) {
    const EvalAttribute& attr = attributes[ai];
    AttributeReport ar;
    ar.category = attr.category;
    ar.value = attr.value;

    auto part = index.partitions.find(attr.category);
    if (part == index.partitions.end() || !part->second.count(attr.value) ||
        part->second.at(attr.value).empty()) {
      ar.skipped = true;
      ar.skip_reason = "empty or unknown subset \"" + attr.value + "\"";
      report.attributes.push_back(std::move(ar));
      continue;
    }

    std::string attr_txt = attribute_text(attr.category, attr.value);
    EmbeddingVector attr_emb = providers.attribute_embedding(attr_txt, audio_store.dim());

    SeededRng rng(derive_seed(config.seed, fnv1a64(attr_txt)));
    double delta_sum = 0.0;
    size_t count = 0;
    double bpm_sum = 0.0;
    size_t bpm_count = 0;

    for (int s = 0; s < config.n_songs; ++s) {
      const TrackRecord& song = *tracks[rng.below(tracks.size())];
      for (int v = 0; v < config.n_variations; ++v) {
        uint64_t gen_seed = derive_seed(config.seed, fnv1a64(attr_txt + "|" + song.id) +
                                                         static_cast<uint64_t>(s) * 1000 +
                                                         static_cast<uint64_t>(v));
        GenerationRequest base;
        base.prompt = song.description;
        base.reference_music_id = song.id;
        base.seed = gen_seed;
        base.steps = config.steps;
        base.cfg_scale = config.cfg_scale;
        base.frames = config.frames;

        GenerationRequest ctrl = base;
        ctrl.attribute_controls[attr.category] = attr.value;

        GenerationOutput out_base = generate(base, checkpoint, index, providers);
        GenerationOutput out_ctrl = generate(ctrl, checkpoint, index, providers);

        double s_base = clap_score(attr_emb, embedder.embed(out_base.latent, out_base.trace));
        double s_ctrl = clap_score(attr_emb, embedder.embed(out_ctrl.latent, out_ctrl.trace));
        delta_sum += s_ctrl - s_base;
        ++count;

        if (attr.category == TagCategory::tempo) {
          for (const StyleSource& src : out_ctrl.trace.styles) {
            if (src.category != TagCategory::tempo || src.track_id.empty()) continue;
            const TrackRecord* rec = index.manifest.find(src.track_id);
            if (rec && rec->tempo_bpm) {
              bpm_sum += *rec->tempo_bpm;
              ++bpm_count;
            }
          }
        }
      }
    }
    ar.delta_clap = delta_sum / static_cast<double>(count);
    ar.count = count;
    if (bpm_count > 0) ar.mean_source_bpm = bpm_sum / static_cast<double>(bpm_count);
    report.attributes.push_back(std::move(ar));
  }
  return report;
}

}  // namespace vmb
