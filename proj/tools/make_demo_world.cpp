// Writes a small synthetic dataset (stores, vocabulary, raw manifest) so the
// vmb CLI can be exercised end to end without external data.

#include <iostream>

#include <CLI11.hpp>

#include "vmb/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"vmb-make-demo-world: synthesize a desk-scale dataset"};
  std::string out_dir = "demo_world";
  vmb::DemoWorldConfig config;
  config.n_vocal = 2;
  config.n_low_quality = 1;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--tracks", config.n_tracks, "number of tracks");
  app.add_option("--dim", config.embedding_dim, "embedding dimension");
  app.add_option("--seed", config.seed, "world seed");
  app.add_option("--vocal", config.n_vocal, "tracks that trip the vocal gate");
  app.add_option("--low-quality", config.n_low_quality, "tracks below the quality gate");
  CLI11_PARSE(app, argc, argv);

  try {
    vmb::DemoWorld world = vmb::build_demo_world(config);
    vmb::write_demo_world(world, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote " << out_dir << "/{audio.vmbe, text.vmbe, vocab.json, raw_manifest.jsonl}\n";
  return 0;
}
