#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vmb/embedding.hpp"
#include "vmb/tagging.hpp"

namespace vmb {

struct RetrievalResult {
  std::string track_id;
  double score = 0.0;
  size_t rank = 0;  // 1-based
};

// Flat retrieval database: per-space views over all tracks for broad
// retrieval plus attribute partitions (genre/tempo/mood) for targeted
// retrieval. Immutable after build; queries are read-only.
struct RetrievalIndex {
  DatasetManifest manifest;
  // space -> track id -> embedding id within that space's store.
  std::map<EmbeddingSpace, std::map<std::string, std::string>> broad;
  // category -> subset (tag name) -> sorted track ids. Subsets within a
  // category are disjoint; every vocabulary tag appears, possibly empty.
  std::map<TagCategory, std::map<std::string, std::vector<std::string>>> partitions;
  // Tracks skipped because they had no resolvable audio embedding.
  std::vector<std::string> excluded;

  const EmbeddingVector& embedding_of(EmbeddingSpace space, const std::string& track_id) const;
};

// Builds the broad views and tag partitions from a validated manifest.
// When a track carries several tags of one category, only the top-scoring
// tag (ties broken lexicographically) defines its partition membership, so
// subsets stay disjoint. Tracks without an audio embedding are excluded and
// reported, not fatal.
RetrievalIndex build_index(const DatasetManifest& manifest);

// Exhaustive flat scan: top-k tracks of the given space by cosine
// similarity, ties broken by ascending track id. Throws EmptyIndexError if
// the space has no candidates, DimensionError on space mismatch.
std::vector<RetrievalResult> broad_retrieve(const EmbeddingVector& query, EmbeddingSpace space,
                                            const RetrievalIndex& index, size_t k = 1);

// Like broad_retrieve but skips one track id (used by training so a sample
// cannot retrieve itself).
std::vector<RetrievalResult> broad_retrieve_excluding(const EmbeddingVector& query,
                                                      EmbeddingSpace space,
                                                      const RetrievalIndex& index,
                                                      const std::string& excluded_id,
                                                      size_t k = 1);

// Pluggable attribute-text encoder for targeted queries.
class AttributeEmbedder {
 public:
  virtual ~AttributeEmbedder() = default;
  virtual EmbeddingVector embed(const std::string& attribute_text) const = 0;
};

// Deterministic stub embedder into the joint audio space.
class StubAttributeEmbedder : public AttributeEmbedder {
 public:
  StubAttributeEmbedder(size_t dim, uint64_t seed) : dim_(dim), seed_(seed) {}
  EmbeddingVector embed(const std::string& attribute_text) const override {
    return stub_embed(attribute_text, EmbeddingSpace::audio, dim_, seed_);
  }

 private:
  size_t dim_;
  uint64_t seed_;
};

// Argmax cosine inside one subset of a partition: embeds the attribute text
// and returns the best-matching member, ties broken by ascending id.
// Throws PartitionError for an unknown subset and EmptyPartitionError for a
// known-but-empty one (callers may fall back to broad retrieval).
RetrievalResult targeted_retrieve(const std::string& attribute_text, TagCategory category,
                                  const std::string& subset, const RetrievalIndex& index,
                                  const AttributeEmbedder& embedder);

// "VMBI" container. Embeddings are referenced through the manifest's store
// files (relative path + FNV-1a fingerprint), never duplicated.
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

}  // namespace vmb
