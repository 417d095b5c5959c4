#pragma once

#include <memory>
#include <vector>

#include "vmb/tagging.hpp"

namespace vmb {

// Knobs for the deterministic synthetic dataset used by desk-scale runs.
struct DemoWorldConfig {
  size_t n_tracks = 16;
  size_t embedding_dim = 64;
  uint64_t seed = 0;
  double noise_mix = 0.5;     // random component blended into each track's audio embedding
  size_t n_vocal = 0;         // tracks constructed to trip the vocal gate
  size_t n_low_quality = 0;   // tracks with a pam score below the quality gate
  bool with_text_store = true;
};

struct DemoWorld {
  std::shared_ptr<EmbeddingStore> audio_store;
  std::shared_ptr<EmbeddingStore> text_store;  // null unless requested
  TagVocabulary vocabulary;
  std::vector<TrackRecord> raw_records;

  std::map<EmbeddingSpace, StoreRef> store_refs() const;
};

// Builds a small self-consistent world: a fixed four-category vocabulary
// with stub tag embeddings, tracks whose audio embeddings mix their chosen
// tag directions with noise (orthogonalized against the vocal markers so
// the vocal gate stays quiet), BPM assignments matching the tempo choice,
// and per-track text embeddings keyed by track id.
DemoWorld build_demo_world(const DemoWorldConfig& config = {});

// Serializes the world to <dir>/{audio.vmbe, text.vmbe, vocab.json,
// raw_manifest.jsonl} for CLI walkthroughs.
void write_demo_world(const DemoWorld& world, const std::filesystem::path& dir);

}  // namespace vmb
