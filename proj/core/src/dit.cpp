#include "vmb/dit.hpp"

#include <cmath>
#include <sstream>

#include "dit_internal.hpp"
#include "vmb/conditioning.hpp"
#include "vmb/errors.hpp"
#include "vmb/rng.hpp"

namespace vmb {

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_latent < 1 || d_text < 1 ||
      max_text_tokens < 1 || d_style < 1 || max_frames < 1) {
    throw ConfigError("model config: all sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (d_model % 2 != 0) {
    throw ConfigError("model config: d_model must be even for timestep features");
  }
  if (control_layers < 1 || control_layers > n_layers) {
    throw ConfigError("model config: control_layers outside [1, n_layers]");
  }
}

Mat& Parameters::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("parameters: unknown tensor \"" + name + "\"");
  return it->second;
}

const Mat& Parameters::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("parameters: unknown tensor \"" + name + "\"");
  return it->second;
}

size_t Parameters::flat_size() const {
  size_t n = 0;
  for (const auto& [name, m] : tensors) n += static_cast<size_t>(m.size());
  return n;
}

double Parameters::get_flat(size_t i) const {
  for (const auto& [name, m] : tensors) {
    size_t n = static_cast<size_t>(m.size());
    if (i < n) return m.data()[i];
    i -= n;
  }
  throw RangeError("parameters: flat index out of range");
}

void Parameters::set_flat(size_t i, double v) {
  for (auto& [name, m] : tensors) {
    size_t n = static_cast<size_t>(m.size());
    if (i < n) {
      m.data()[i] = v;
      return;
    }
    i -= n;
  }
  throw RangeError("parameters: flat index out of range");
}

std::vector<std::pair<std::string, size_t>> Parameters::flat_layout() const {
  std::vector<std::pair<std::string, size_t>> out;
  size_t offset = 0;
  for (const auto& [name, m] : tensors) {
    out.emplace_back(name, offset);
    offset += static_cast<size_t>(m.size());
  }
  return out;
}

Mat timestep_embedding(double t, int d_model) {
  if (d_model < 2 || d_model % 2 != 0) {
    throw ConfigError("timestep_embedding: d_model must be even and >= 2");
  }
  int half = d_model / 2;
  Mat out(1, d_model);
  double log_min = 0.0;                 // omega = 1
  double log_max = std::log(1000.0);    // fastest oscillation over t in [0,1]
  for (int j = 0; j < half; ++j) {
    double frac = half == 1 ? 0.0 : static_cast<double>(j) / (half - 1);
    double omega = std::exp(log_min + frac * (log_max - log_min));
    out(0, 2 * j) = std::sin(omega * t);
    out(0, 2 * j + 1) = std::cos(omega * t);
  }
  return out;
}

namespace detail {

Var ParamLookup::operator()(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  Var v = tape_.param(name, params_.at(name));
  cache_.emplace(name, v);
  return v;
}

Var attention(Tape& tape, ParamLookup& p, const std::string& prefix, Var q_src, Var kv_src,
              const ModelConfig& config) {
  Var q = tape.add_rowvec(tape.matmul(q_src, p(prefix + ".wq")), p(prefix + ".bq"));
  Var k = tape.add_rowvec(tape.matmul(kv_src, p(prefix + ".wk")), p(prefix + ".bk"));
  Var v = tape.add_rowvec(tape.matmul(kv_src, p(prefix + ".wv")), p(prefix + ".bv"));
  int dh = config.head_dim();
  std::vector<Var> heads;
  heads.reserve(config.n_heads);
  for (int h = 0; h < config.n_heads; ++h) {
    Var qh = tape.slice_cols(q, h * dh, dh);
    Var kh = tape.slice_cols(k, h * dh, dh);
    Var vh = tape.slice_cols(v, h * dh, dh);
    Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(dh));
    heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
  }
  Var merged = tape.concat_cols(heads);
  return tape.add_rowvec(tape.matmul(merged, p(prefix + ".wo")), p(prefix + ".bo"));
}

Var transformer_block(Tape& tape, ParamLookup& p, const std::string& prefix, Var h, Var context,
                      const ModelConfig& config) {
  Var a1 = tape.layer_norm(h, p(prefix + ".ln1.g"), p(prefix + ".ln1.b"));
  h = tape.add(h, attention(tape, p, prefix + ".attn", a1, a1, config));

  Var a2 = tape.layer_norm(h, p(prefix + ".ln2.g"), p(prefix + ".ln2.b"));
  h = tape.add(h, attention(tape, p, prefix + ".xattn", a2, context, config));

  Var a3 = tape.layer_norm(h, p(prefix + ".ln3.g"), p(prefix + ".ln3.b"));
  Var f = tape.add_rowvec(tape.matmul(a3, p(prefix + ".ff.w1")), p(prefix + ".ff.b1"));
  f = tape.gelu(f);
  f = tape.add_rowvec(tape.matmul(f, p(prefix + ".ff.w2")), p(prefix + ".ff.b2"));
  return tape.add(h, f);
}

Mat style_input_row(const EmbeddingVector& style_embedding, const Mat& text_tokens,
                    const Mat& timestep_embed, const ModelConfig& config) {
  if (static_cast<int>(style_embedding.dim()) != config.d_style) {
    throw ShapeError("style condition: embedding dim " + std::to_string(style_embedding.dim()) +
                     " does not match configured d_style " + std::to_string(config.d_style));
  }
  Mat row(1, config.d_style + config.d_text + config.d_model);
  for (int i = 0; i < config.d_style; ++i) row(0, i) = style_embedding.values[i];
  Mat pooled = text_tokens.rows() > 0 ? Mat(text_tokens.colwise().mean())
                                      : Mat(Mat::Zero(1, config.d_text));
  row.middleCols(config.d_style, config.d_text) = pooled;
  row.middleCols(config.d_style + config.d_text, config.d_model) = timestep_embed;
  return row;
}

Var build_context(Tape& tape, ParamLookup& p, const ConditioningBundle& cond,
                  const ModelConfig& config) {
  if (cond.text_tokens.rows() > config.max_text_tokens) {
    throw ShapeError("conditioning: " + std::to_string(cond.text_tokens.rows()) +
                     " text tokens exceed max_text_tokens " +
                     std::to_string(config.max_text_tokens));
  }
  if (cond.text_tokens.rows() > 0 && cond.text_tokens.cols() != config.d_text) {
    throw ShapeError("conditioning: text token width " + std::to_string(cond.text_tokens.cols()) +
                     " != d_text " + std::to_string(config.d_text));
  }
  if (cond.timestep_embed.rows() != 1 || cond.timestep_embed.cols() != config.d_model) {
    throw ShapeError("conditioning: timestep features must be [1 x d_model]");
  }
  std::vector<Var> rows;
  if (cond.text_tokens.rows() > 0) rows.push_back(tape.leaf(cond.text_tokens));
  Var t_emb = tape.leaf(cond.timestep_embed);
  rows.push_back(
      tape.add_rowvec(tape.matmul(t_emb, p("base.t_proj.w")), p("base.t_proj.b")));
  if (cond.style) {
    Mat z = style_input_row(cond.style->style_embedding, cond.text_tokens, cond.timestep_embed,
                            config);
    rows.push_back(
        tape.add_rowvec(tape.matmul(tape.leaf(z), p("style.proj.w")), p("style.proj.b")));
  }
  return tape.concat_rows(rows);
}

}  // namespace detail

namespace {

void fill_normal(Mat& m, SeededRng& rng, double std) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = std * rng.normal();
  }
}

// Creation order is fixed so a seed always yields the same tensors.
void init_block(Parameters& params, const std::string& prefix, const ModelConfig& config,
                SeededRng& rng) {
  double std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  auto weight = [&](const std::string& name, int rows, int cols) {
    Mat m(rows, cols);
    fill_normal(m, rng, std);
    params.tensors[prefix + name] = std::move(m);
  };
  auto zeros = [&](const std::string& name, int rows, int cols) {
    params.tensors[prefix + name] = Mat::Zero(rows, cols);
  };
  auto ones = [&](const std::string& name, int cols) {
    params.tensors[prefix + name] = Mat::Ones(1, cols);
  };
  for (const char* ln : {".ln1", ".ln2", ".ln3"}) {
    ones(std::string(ln) + ".g", config.d_model);
    zeros(std::string(ln) + ".b", 1, config.d_model);
  }
  for (const char* att : {".attn", ".xattn"}) {
    int kv_in = std::string(att) == ".attn" ? config.d_model : config.d_text;
    weight(std::string(att) + ".wq", config.d_model, config.d_model);
    zeros(std::string(att) + ".bq", 1, config.d_model);
    weight(std::string(att) + ".wk", kv_in, config.d_model);
    zeros(std::string(att) + ".bk", 1, config.d_model);
    weight(std::string(att) + ".wv", kv_in, config.d_model);
    zeros(std::string(att) + ".bv", 1, config.d_model);
    weight(std::string(att) + ".wo", config.d_model, config.d_model);
    zeros(std::string(att) + ".bo", 1, config.d_model);
  }
  weight(".ff.w1", config.d_model, config.d_ff());
  zeros(".ff.b1", 1, config.d_ff());
  weight(".ff.w2", config.d_ff(), config.d_model);
  zeros(".ff.b2", 1, config.d_model);
}

}  // namespace

Parameters init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  SeededRng rng(seed);
  double std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  Parameters params;

  Mat in_proj(config.d_latent, config.d_model);
  fill_normal(in_proj, rng, std);
  params.tensors["base.in_proj.w"] = std::move(in_proj);
  params.tensors["base.in_proj.b"] = Mat::Zero(1, config.d_model);

  Mat pos(config.max_frames, config.d_model);
  fill_normal(pos, rng, std);
  params.tensors["base.pos_emb"] = std::move(pos);

  Mat t_proj(config.d_model, config.d_text);
  fill_normal(t_proj, rng, std);
  params.tensors["base.t_proj.w"] = std::move(t_proj);
  params.tensors["base.t_proj.b"] = Mat::Zero(1, config.d_text);

  for (int l = 0; l < config.n_layers; ++l) {
    init_block(params, "base.layer" + std::to_string(l), config, rng);
  }

  Mat out_proj(config.d_model, config.d_latent);
  fill_normal(out_proj, rng, std);
  params.tensors["base.out_proj.w"] = std::move(out_proj);
  params.tensors["base.out_proj.b"] = Mat::Zero(1, config.d_latent);

  params.tensors["style.proj.w"] =
      Mat::Zero(config.d_style + config.d_text + config.d_model, config.d_text);
  params.tensors["style.proj.b"] = Mat::Zero(1, config.d_text);
  return params;
}

Var dit_forward_tape(Tape& tape, const Mat& x_t, const ConditioningBundle& cond, double t,
                     const Parameters& params, const ModelConfig& config,
                     const ControlFormerState* control) {
  config.validate();
  (void)t;
  if (x_t.cols() != config.d_latent) {
    throw ShapeError("forward: latent width " + std::to_string(x_t.cols()) + " != d_latent " +
                     std::to_string(config.d_latent));
  }
  if (x_t.rows() < 1 || x_t.rows() > config.max_frames) {
    throw ShapeError("forward: frame count " + std::to_string(x_t.rows()) +
                     " outside [1, max_frames=" + std::to_string(config.max_frames) + "]");
  }
  // The control branch participates only when a control latent is present;
  // a missing latent simply means no fusion.
  const bool use_control = control != nullptr && cond.control_latent.has_value();

  detail::ParamLookup base(tape, params);
  Var context = detail::build_context(tape, base, cond, config);

  // Control chain first: conv_in -> replicated blocks -> per-layer conv_out.
  std::vector<Var> control_outs;
  if (use_control) {
    if (control->num_layers < 1 || control->num_layers > config.n_layers) {
      throw ConfigError("forward: control branch layer count outside [1, n_layers]");
    }
    LatentSequence m = align_frames(*cond.control_latent, x_t.rows());
    if (m.dim() != config.d_latent) {
      throw ShapeError("forward: control latent width " + std::to_string(m.dim()) +
                       " != d_latent " + std::to_string(config.d_latent));
    }
    detail::ParamLookup ctrl(tape, control->params);
    Var c = tape.add_rowvec(tape.matmul(tape.leaf(m.data), ctrl("control.conv_in.w")),
                            ctrl("control.conv_in.b"));
    for (int l = 0; l < control->num_layers; ++l) {
      std::string prefix = "control.layer" + std::to_string(l);
      c = detail::transformer_block(tape, ctrl, prefix, c, context, config);
      std::string conv = "control.conv_out" + std::to_string(l);
      control_outs.push_back(
          tape.add_rowvec(tape.matmul(c, ctrl(conv + ".w")), ctrl(conv + ".b")));
    }
  }

  Var h = tape.add_rowvec(tape.matmul(tape.leaf(x_t), base("base.in_proj.w")),
                          base("base.in_proj.b"));
  h = tape.add(h, tape.slice_rows(base("base.pos_emb"), 0, x_t.rows()));
  for (int l = 0; l < config.n_layers; ++l) {
    h = detail::transformer_block(tape, base, "base.layer" + std::to_string(l), h, context,
                                  config);
    if (use_control && l < control->num_layers) {
      h = tape.add(h, control_outs[static_cast<size_t>(l)]);
    }
    if (!tape.value(h).allFinite()) {
      throw NumericalError("forward: non-finite hidden state after block " + std::to_string(l));
    }
  }
  return tape.add_rowvec(tape.matmul(h, base("base.out_proj.w")), base("base.out_proj.b"));
}

Mat dit_forward(const Mat& x_t, const ConditioningBundle& cond, double t,
                const Parameters& params, const ModelConfig& config) {
  Tape tape;
  return tape.value(dit_forward_tape(tape, x_t, cond, t, params, config));
}

Mat StubTextProvider::tokens(const std::string& text, int d_text, int max_tokens) const {
  if (d_text < 2) throw ConfigError("text provider: d_text must be >= 2");
  if (max_tokens < 1) throw ConfigError("text provider: max_tokens must be >= 1");
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string word;
  while (in >> word && static_cast<int>(words.size()) < max_tokens) words.push_back(word);
  Mat out(static_cast<Eigen::Index>(words.size()), d_text);
  for (size_t i = 0; i < words.size(); ++i) {
    EmbeddingVector e =
        stub_embed(words[i], EmbeddingSpace::text, static_cast<size_t>(d_text), seed_);
    for (int j = 0; j < d_text; ++j) out(static_cast<Eigen::Index>(i), j) = e.values[j];
  }
  return out;
}

ConditioningBundle build_conditioning(const std::string& prompt, double t,
                                      const TextTokenProvider& provider,
                                      const ModelConfig& config) {
  ConditioningBundle cond;
  cond.text_tokens = provider.tokens(prompt, config.d_text, config.max_text_tokens);
  cond.timestep_embed = timestep_embedding(t, config.d_model);
  return cond;
}

}  // namespace vmb
