#include "vmb/conditioning.hpp"

#include "dit_internal.hpp"
#include "vmb/errors.hpp"

namespace vmb {

ControlFormerState init_controlformer(const Parameters& base, const ModelConfig& config, int L) {
  config.validate();
  if (L < 1 || L > config.n_layers) {
    throw ConfigError("controlformer: L=" + std::to_string(L) + " outside [1, n_layers=" +
                      std::to_string(config.n_layers) + "]");
  }
  ControlFormerState state;
  state.num_layers = L;
  state.params.tensors["control.conv_in.w"] = Mat::Zero(config.d_latent, config.d_model);
  state.params.tensors["control.conv_in.b"] = Mat::Zero(1, config.d_model);
  for (int l = 0; l < L; ++l) {
    std::string src = "base.layer" + std::to_string(l);
    std::string dst = "control.layer" + std::to_string(l);
    for (const auto& [name, tensor] : base.tensors) {
      if (name.rfind(src + ".", 0) == 0) {
        state.params.tensors[dst + name.substr(src.size())] = tensor;
      }
    }
    std::string conv = "control.conv_out" + std::to_string(l);
    state.params.tensors[conv + ".w"] = Mat::Zero(config.d_model, config.d_model);
    state.params.tensors[conv + ".b"] = Mat::Zero(1, config.d_model);
  }
  return state;
}

std::vector<Mat> control_forward(const LatentSequence& m, const ControlFormerState& state,
                                 const ConditioningBundle& cond, double t,
                                 const Parameters& base, const ModelConfig& config) {
  config.validate();
  (void)t;
  m.check();
  if (m.dim() != config.d_latent) {
    throw ShapeError("control_forward: latent width " + std::to_string(m.dim()) +
                     " != d_latent " + std::to_string(config.d_latent));
  }
  Tape tape;
  detail::ParamLookup base_lookup(tape, base);
  Var context = detail::build_context(tape, base_lookup, cond, config);
  detail::ParamLookup ctrl(tape, state.params);
  Var c = tape.add_rowvec(tape.matmul(tape.leaf(m.data), ctrl("control.conv_in.w")),
                          ctrl("control.conv_in.b"));
  std::vector<Mat> outs;
  outs.reserve(static_cast<size_t>(state.num_layers));
  for (int l = 0; l < state.num_layers; ++l) {
    c = detail::transformer_block(tape, ctrl, "control.layer" + std::to_string(l), c, context,
                                  config);
    std::string conv = "control.conv_out" + std::to_string(l);
    Var out = tape.add_rowvec(tape.matmul(c, ctrl(conv + ".w")), ctrl(conv + ".b"));
    outs.push_back(tape.value(out));
  }
  return outs;
}

Mat fuse_hidden(const Mat& h_main, const Mat& h_control) {
  if (h_main.rows() != h_control.rows() || h_main.cols() != h_control.cols()) {
    throw ShapeError("fuse_hidden: shape mismatch");
  }
  return h_main + h_control;
}

std::string append_attribute_prompt(const std::string& prompt,
                                    const std::string& attribute_text) {
  if (attribute_text.empty()) return prompt;
  if (prompt.empty()) return attribute_text;
  return prompt + ", " + attribute_text;
}

StyleCondition build_style_condition(const EmbeddingVector& style_embedding,
                                     const std::string& attribute_text, const Mat& text_tokens,
                                     const Mat& timestep_embed, const Parameters& params,
                                     const ModelConfig& config) {
  StyleCondition style;
  style.style_embedding = style_embedding;
  style.attribute_text = attribute_text;
  Mat z = detail::style_input_row(style_embedding, text_tokens, timestep_embed, config);
  style.projected_rows =
      (z * params.at("style.proj.w")).rowwise() + params.at("style.proj.b").row(0);
  return style;
}

Mat conditioned_forward(const Mat& x_t, const ConditioningBundle& cond, double t,
                        const Parameters& params, const ModelConfig& config,
                        const ControlFormerState& control) {
  Tape tape;
  return tape.value(dit_forward_tape(tape, x_t, cond, t, params, config, &control));
}

}  // namespace vmb
