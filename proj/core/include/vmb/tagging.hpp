#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vmb/embedding.hpp"

namespace vmb {

enum class TagCategory : uint8_t { instrument = 0, genre = 1, mood = 2, tempo = 3 };

constexpr std::array<TagCategory, 4> kAllCategories = {
    TagCategory::instrument, TagCategory::genre, TagCategory::mood, TagCategory::tempo};

// Categories that form retrieval partitions.
constexpr std::array<TagCategory, 3> kPartitionCategories = {
    TagCategory::genre, TagCategory::tempo, TagCategory::mood};

std::string to_string(TagCategory c);
TagCategory category_from_string(const std::string& name);

struct TagEntry {
  std::string name;
  EmbeddingVector embedding;
  double threshold = 0.3;
};

// Curated label set. Tag embeddings live in the same joint space as the
// audio embeddings they are scored against.
class TagVocabulary {
 public:
  // Throws ValidationError on duplicate name within a category or a
  // threshold outside [0, 1].
  void add(TagCategory category, TagEntry entry);
  // Throws ConfigError when the category has no tags.
  const std::vector<TagEntry>& category(TagCategory c) const;
  bool has_tag(TagCategory c, const std::string& name) const;
  bool empty() const { return categories_.empty(); }
  // Every category non-empty; throws ConfigError otherwise.
  void require_complete() const;

  // Embedding ids (in the audio store) of vocal-marker tags used by the
  // vocal gate; may be empty, in which case ingestion skips that gate.
  std::vector<std::string> vocal_embedding_ids;

 private:
  std::map<TagCategory, std::vector<TagEntry>> categories_;
};

struct ScoredTag {
  std::string name;
  double score = 0.0;
};

using TagResult = std::map<TagCategory, std::vector<ScoredTag>>;
using TagNames = std::map<TagCategory, std::vector<std::string>>;

TagNames names_only(const TagResult& result);

// Per category, keeps exactly the tags scoring >= their threshold
// (inclusive), sorted by descending score with lexicographic tie-break.
TagResult tag_track(const EmbeddingVector& audio, const TagVocabulary& vocab);

// True iff the best vocal-tag similarity is >= threshold (inclusive).
bool detect_vocals(const EmbeddingVector& audio, const std::vector<EmbeddingVector>& vocal_tags,
                   double threshold = 0.1);

// One database entry: a music track plus its annotations.
struct TrackRecord {
  std::string id;
  double duration_s = 0.0;
  TagNames tags;
  std::string description;
  std::string audio_embedding_id;
  double pam_score = 0.0;
  std::optional<double> tempo_bpm;
  std::map<std::string, std::string> metadata;

  bool operator==(const TrackRecord&) const = default;
};

// True (keep) iff pam_score >= threshold. Throws ValidationError when the
// score is outside [0, 1].
bool quality_filter(const TrackRecord& record, double threshold = 0.95);

// Deterministic single-sentence rendering with fixed clause order
// mood, genre, instrument, tempo; empty clauses are omitted and the
// all-empty case falls back to "An instrumental track.".
std::string compose_description(const TagNames& tags,
                                const std::map<std::string, std::string>& metadata = {});

struct StoreRef {
  std::string path;  // as referenced on disk; may be empty for in-memory stores
  std::shared_ptr<const EmbeddingStore> store;
};

struct DatasetManifest {
  std::vector<TrackRecord> records;
  TagVocabulary vocabulary;
  std::map<EmbeddingSpace, StoreRef> stores;

  const TrackRecord* find(const std::string& id) const;
  const EmbeddingStore& store(EmbeddingSpace space) const;
  bool has_store(EmbeddingSpace space) const { return stores.count(space) != 0; }
  // Unique ids, resolvable audio embeddings, tags present in the vocabulary.
  void validate() const;
};

struct IngestConfig {
  double vocal_threshold = 0.1;
  double pam_threshold = 0.95;
  // BPM cut points for derived tempo tags.
  double tempo_fast_min = 120.0;
  double tempo_slow_max = 76.0;
};

struct IngestReport {
  size_t input = 0;
  size_t dropped_vocal = 0;
  size_t dropped_quality = 0;
  size_t kept = 0;
};

// Applies, in order: vocal gate, quality gate, tagging, description
// composition. Records failing a gate are dropped and counted; the
// accounting identity kept + dropped_vocal + dropped_quality == input holds.
std::pair<DatasetManifest, IngestReport> ingest_dataset(
    const std::vector<TrackRecord>& raw_records, const TagVocabulary& vocab,
    const std::map<EmbeddingSpace, StoreRef>& stores, const IngestConfig& config = {});

// UTF-8 JSON vocabulary: {category: [{"tag", "threshold", "embedding_id"}]},
// embeddings resolved against the given store. Optional top-level key
// "vocal_embedding_ids" lists the vocal-marker embeddings.
TagVocabulary load_vocabulary(const std::filesystem::path& path, const EmbeddingStore& store);

// Line-delimited JSON records (one TrackRecord per line).
std::vector<TrackRecord> load_track_records(const std::filesystem::path& path);
void save_track_records(const std::vector<TrackRecord>& records,
                        const std::filesystem::path& path);

std::string ingest_report_json(const IngestReport& report);

}  // namespace vmb
