#pragma once

// Shared pieces of the transformer forward pass, used by both the base
// denoiser and the control branch.

#include <map>
#include <string>

#include "vmb/dit.hpp"
#include "vmb/tape.hpp"

namespace vmb::detail {

// Registers each named tensor on the tape once and hands back its Var on
// later lookups, so shared tensors stay a single node.
class ParamLookup {
 public:
  ParamLookup(Tape& tape, const Parameters& params) : tape_(tape), params_(params) {}
  Var operator()(const std::string& name);

 private:
  Tape& tape_;
  const Parameters& params_;
  std::map<std::string, Var> cache_;
};

// Multi-head attention with queries from `q_src` and keys/values from
// `kv_src`; weight names are looked up under `prefix` (wq/bq, wk/bk, wv/bv,
// wo/bo).
Var attention(Tape& tape, ParamLookup& p, const std::string& prefix, Var q_src, Var kv_src,
              const ModelConfig& config);

// Pre-norm block: self-attention, cross-attention over `context`, GELU MLP,
// each wrapped in a residual connection.
Var transformer_block(Tape& tape, ParamLookup& p, const std::string& prefix, Var h, Var context,
                      const ModelConfig& config);

// Cross-attention context rows: [text tokens | projected timestep |
// optional style row]. Registers the style projection parameters when a
// style condition is present.
Var build_context(Tape& tape, ParamLookup& p, const ConditioningBundle& cond,
                  const ModelConfig& config);

// [style embedding | mean text token | timestep features] as one row.
Mat style_input_row(const EmbeddingVector& style_embedding, const Mat& text_tokens,
                    const Mat& timestep_embed, const ModelConfig& config);

}  // namespace vmb::detail
