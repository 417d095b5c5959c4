#pragma once

#include <string>
#include <vector>

#include "vmb/dit.hpp"

namespace vmb {

// Replicated early transformer layers plus zero-initialized pointwise
// input/output maps ("convolutions" with kernel size one over frames).
// Zero initialization makes the whole branch a no-op at the start of
// training, so fusing it cannot disturb the base model.
struct ControlFormerState {
  int num_layers = 0;
  Parameters params;  // control.conv_in.*, control.layer{i}.*, control.conv_out{i}.*
};

// Copies base layers 1..L into a fresh control branch; conv_in and every
// conv_out start exactly zero. The base parameters are untouched.
// Throws ConfigError when L is outside [1, n_layers].
ControlFormerState init_controlformer(const Parameters& base, const ModelConfig& config, int L);

// Runs the control chain conv_in -> blocks 1..L (with the same conditioning
// context as the main branch) and returns the L conv_out projections, each
// shaped like a main-branch hidden state. With freshly initialized state
// every output is exactly zero.
std::vector<Mat> control_forward(const LatentSequence& m, const ControlFormerState& state,
                                 const ConditioningBundle& cond, double t,
                                 const Parameters& base, const ModelConfig& config);

// Element-wise fusion of main and control hidden states.
Mat fuse_hidden(const Mat& h_main, const Mat& h_control);

// prompt + ", " + attribute; either side empty returns the other unchanged.
std::string append_attribute_prompt(const std::string& prompt, const std::string& attribute_text);

// Concatenates [style embedding | mean text token | timestep features] and
// projects the row into the text embedding space with the "style.proj"
// tensors. Throws ShapeError when the style embedding dim differs from
// config.d_style.
StyleCondition build_style_condition(const EmbeddingVector& style_embedding,
                                     const std::string& attribute_text, const Mat& text_tokens,
                                     const Mat& timestep_embed, const Parameters& params,
                                     const ModelConfig& config);

// Base forward with the control branch fused into layers 1..L and any style
// row in every block's cross-attention context. With a freshly initialized
// ControlFormer and no style condition the output equals dit_forward
// exactly.
Mat conditioned_forward(const Mat& x_t, const ConditioningBundle& cond, double t,
                        const Parameters& params, const ModelConfig& config,
                        const ControlFormerState& control);

}  // namespace vmb
