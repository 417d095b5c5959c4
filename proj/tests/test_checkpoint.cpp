#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/testutil.hpp"
#include "vmb/checkpoint.hpp"
#include "vmb/errors.hpp"

using namespace vmb;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_latent = 4;
  c.d_text = 6;
  c.max_text_tokens = 12;
  c.control_layers = 1;
  c.d_style = 5;
  c.max_frames = 16;
  return c;
}

}  // namespace

TEST_CASE("checkpoint: config and tensor round trip") {
  vmbtest::TempDir dir("ckpt");
  ModelConfig config = small_config();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = init_params(config, 61);
  ckpt.control = init_controlformer(ckpt.params, config, config.control_layers);

  save_checkpoint(ckpt, dir.file("m.vmbc"));
  Checkpoint loaded = load_checkpoint(dir.file("m.vmbc"));

  CHECK(loaded.config == config);
  REQUIRE(loaded.control.has_value());
  CHECK(loaded.control->num_layers == config.control_layers);
  CHECK(loaded.params.tensors.size() == ckpt.params.tensors.size());
  CHECK(loaded.control->params.tensors.size() == ckpt.control->params.tensors.size());

  // values survive one f32 quantization; the file itself round-trips bitwise
  save_checkpoint(loaded, dir.file("m2.vmbc"));
  CHECK(vmbtest::read_bytes(dir.file("m.vmbc")) == vmbtest::read_bytes(dir.file("m2.vmbc")));

  Checkpoint again = load_checkpoint(dir.file("m2.vmbc"));
  for (const auto& [name, tensor] : loaded.params.tensors) {
    CHECK(again.params.at(name) == tensor);
  }
}

TEST_CASE("checkpoint: control branch is optional") {
  vmbtest::TempDir dir("ckptnc");
  Checkpoint ckpt;
  ckpt.config = small_config();
  ckpt.params = init_params(ckpt.config, 62);
  save_checkpoint(ckpt, dir.file("base.vmbc"));
  Checkpoint loaded = load_checkpoint(dir.file("base.vmbc"));
  CHECK_FALSE(loaded.control.has_value());
  CHECK(loaded.params.tensors.count("base.in_proj.w") == 1);
  CHECK(loaded.params.tensors.count("style.proj.w") == 1);
}

TEST_CASE("checkpoint: corruption handling") {
  vmbtest::TempDir dir("ckptbad");
  Checkpoint ckpt;
  ckpt.config = small_config();
  ckpt.params = init_params(ckpt.config, 63);
  save_checkpoint(ckpt, dir.file("c.vmbc"));
  std::string bytes = vmbtest::read_bytes(dir.file("c.vmbc"));

  SUBCASE("bad magic") {
    bytes[0] = 'Z';
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("bad version") {
    bytes[5] = 3;
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("truncated") {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir.file("absent.vmbc")), IoError);
  }
}

TEST_CASE("checkpoint: loaded parameters drive the model identically") {
  vmbtest::TempDir dir("ckptfwd");
  ModelConfig config = small_config();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = init_params(config, 64);
  ckpt.control = init_controlformer(ckpt.params, config, config.control_layers);
  save_checkpoint(ckpt, dir.file("m.vmbc"));
  Checkpoint loaded = load_checkpoint(dir.file("m.vmbc"));

  SeededRng rng(65);
  Mat x = vmbtest::random_mat(rng, 4, config.d_latent);
  ConditioningBundle cond;
  cond.text_tokens = vmbtest::random_mat(rng, 2, config.d_text);
  cond.timestep_embed = timestep_embedding(0.5, config.d_model);

  // quantized parameters give a deterministic forward; a second load agrees
  Checkpoint loaded2 = load_checkpoint(dir.file("m.vmbc"));
  Mat v1 = dit_forward(x, cond, 0.5, loaded.params, config);
  Mat v2 = dit_forward(x, cond, 0.5, loaded2.params, config);
  CHECK(v1 == v2);
}
