#include "vmb/tagging.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vmb/binary_io.hpp"
#include "vmb/errors.hpp"

namespace vmb {

using nlohmann::json;

std::string to_string(TagCategory c) {
  switch (c) {
    case TagCategory::instrument: return "instrument";
    case TagCategory::genre: return "genre";
    case TagCategory::mood: return "mood";
    case TagCategory::tempo: return "tempo";
  }
  return "unknown";
}

TagCategory category_from_string(const std::string& name) {
  if (name == "instrument") return TagCategory::instrument;
  if (name == "genre") return TagCategory::genre;
  if (name == "mood") return TagCategory::mood;
  if (name == "tempo") return TagCategory::tempo;
  throw ValidationError("unknown tag category: " + name);
}

void TagVocabulary::add(TagCategory category, TagEntry entry) {
  if (entry.name.empty()) throw ValidationError("vocabulary: empty tag name");
  if (entry.threshold < 0.0 || entry.threshold > 1.0) {
    throw ValidationError("vocabulary: threshold for \"" + entry.name + "\" outside [0,1]");
  }
  auto& list = categories_[category];
  for (const TagEntry& e : list) {
    if (e.name == entry.name) {
      throw ValidationError("vocabulary: duplicate tag \"" + entry.name + "\" in category " +
                            to_string(category));
    }
  }
  list.push_back(std::move(entry));
}

const std::vector<TagEntry>& TagVocabulary::category(TagCategory c) const {
  auto it = categories_.find(c);
  if (it == categories_.end() || it->second.empty()) {
    throw ConfigError("vocabulary: category " + to_string(c) + " is empty");
  }
  return it->second;
}

bool TagVocabulary::has_tag(TagCategory c, const std::string& name) const {
  auto it = categories_.find(c);
  if (it == categories_.end()) return false;
  for (const TagEntry& e : it->second) {
    if (e.name == name) return true;
  }
  return false;
}

void TagVocabulary::require_complete() const {
  for (TagCategory c : kAllCategories) category(c);
}

TagNames names_only(const TagResult& result) {
  TagNames out;
  for (const auto& [cat, scored] : result) {
    auto& names = out[cat];
    names.reserve(scored.size());
    for (const ScoredTag& t : scored) names.push_back(t.name);
  }
  return out;
}

TagResult tag_track(const EmbeddingVector& audio, const TagVocabulary& vocab) {
  vocab.require_complete();
  TagResult result;
  for (TagCategory cat : kAllCategories) {
    std::vector<ScoredTag> kept;
    for (const TagEntry& entry : vocab.category(cat)) {
      double score = cosine_similarity(entry.embedding, audio);
      if (score >= entry.threshold) kept.push_back({entry.name, score});
    }
    std::sort(kept.begin(), kept.end(), [](const ScoredTag& a, const ScoredTag& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.name < b.name;
    });
    result[cat] = std::move(kept);
  }
  return result;
}

bool detect_vocals(const EmbeddingVector& audio, const std::vector<EmbeddingVector>& vocal_tags,
                   double threshold) {
  if (vocal_tags.empty()) throw ConfigError("detect_vocals: empty vocal tag list");
  double best = -1.0;
  for (const EmbeddingVector& tag : vocal_tags) {
    best = std::max(best, cosine_similarity(tag, audio));
  }
  return best >= threshold;
}

bool quality_filter(const TrackRecord& record, double threshold) {
  if (record.pam_score < 0.0 || record.pam_score > 1.0) {
    throw ValidationError("quality_filter: pam_score outside [0,1] for \"" + record.id + "\"");
  }
  return record.pam_score >= threshold;
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool starts_with_vowel(const std::string& s) {
  if (s.empty()) return false;
  char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

const std::vector<std::string>* tags_for(const TagNames& tags, TagCategory c) {
  auto it = tags.find(c);
  if (it == tags.end() || it->second.empty()) return nullptr;
  return &it->second;
}

}  // namespace

std::string compose_description(const TagNames& tags,
                                const std::map<std::string, std::string>& metadata) {
  (void)metadata;  // reserved for template extensions; the default template is tag-driven
  const auto* mood = tags_for(tags, TagCategory::mood);
  const auto* genre = tags_for(tags, TagCategory::genre);
  const auto* instrument = tags_for(tags, TagCategory::instrument);
  const auto* tempo = tags_for(tags, TagCategory::tempo);
  if (!mood && !genre && !instrument && !tempo) return "An instrumental track.";

  std::string body;
  if (mood) body += join(*mood, ", ") + " ";
  if (genre) body += join(*genre, ", ") + " ";
  body += "track";
  if (instrument) body += " featuring " + join(*instrument, ", ");
  if (tempo) body += " at a " + join(*tempo, ", ") + " tempo";
  std::string article = starts_with_vowel(body) ? "An " : "A ";
  return article + body + ".";
}

const TrackRecord* DatasetManifest::find(const std::string& id) const {
  for (const TrackRecord& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

const EmbeddingStore& DatasetManifest::store(EmbeddingSpace space) const {
  auto it = stores.find(space);
  if (it == stores.end() || !it->second.store) {
    throw ValidationError("manifest: no embedding store for space " + to_string(space));
  }
  return *it->second.store;
}

void DatasetManifest::validate() const {
  std::vector<std::string> missing;
  std::map<std::string, int> seen;
  for (const TrackRecord& r : records) {
    if (r.id.empty()) throw ValidationError("manifest: record with empty id");
    if (++seen[r.id] > 1) throw ValidationError("manifest: duplicate record id \"" + r.id + "\"");
    if (!has_store(EmbeddingSpace::audio) ||
        !store(EmbeddingSpace::audio).contains(r.audio_embedding_id)) {
      missing.push_back(r.audio_embedding_id);
    }
    for (const auto& [cat, names] : r.tags) {
      for (const std::string& name : names) {
        if (!vocabulary.has_tag(cat, name)) {
          throw ValidationError("manifest: record \"" + r.id + "\" carries tag \"" + name +
                                "\" unknown to category " + to_string(cat));
        }
      }
    }
  }
  if (!missing.empty()) {
    throw ValidationError("manifest: unresolvable audio embedding ids: " + join(missing, ", "));
  }
}

namespace {

std::string derived_tempo_tag(double bpm, const IngestConfig& config) {
  if (bpm >= config.tempo_fast_min) return "fast";
  if (bpm <= config.tempo_slow_max) return "slow";
  return "medium";
}

}  // namespace

std::pair<DatasetManifest, IngestReport> ingest_dataset(
    const std::vector<TrackRecord>& raw_records, const TagVocabulary& vocab,
    const std::map<EmbeddingSpace, StoreRef>& stores, const IngestConfig& config) {
  vocab.require_complete();
  auto audio_it = stores.find(EmbeddingSpace::audio);
  if (audio_it == stores.end() || !audio_it->second.store) {
    throw ValidationError("ingest: audio embedding store is required");
  }
  const EmbeddingStore& audio_store = *audio_it->second.store;

  std::vector<std::string> unresolved;
  for (const TrackRecord& r : raw_records) {
    if (!audio_store.contains(r.audio_embedding_id)) unresolved.push_back(r.audio_embedding_id);
  }
  if (!unresolved.empty()) {
    throw ValidationError("ingest: unresolvable embedding ids: " + join(unresolved, ", "));
  }

  std::vector<EmbeddingVector> vocal_vecs;
  for (const std::string& id : vocab.vocal_embedding_ids) {
    if (!audio_store.contains(id)) unresolved.push_back(id);
  }
  if (!unresolved.empty()) {
    throw ValidationError("ingest: unresolvable vocal tag embedding ids: " +
                          join(unresolved, ", "));
  }
  for (const std::string& id : vocab.vocal_embedding_ids) {
    vocal_vecs.push_back(audio_store.at(id));
  }

  DatasetManifest manifest;
  manifest.vocabulary = vocab;
  manifest.stores = stores;
  IngestReport report;
  report.input = raw_records.size();

  for (const TrackRecord& raw : raw_records) {
    const EmbeddingVector& audio = audio_store.at(raw.audio_embedding_id);
    if (!vocal_vecs.empty() && detect_vocals(audio, vocal_vecs, config.vocal_threshold)) {
      ++report.dropped_vocal;
      continue;
    }
    if (!quality_filter(raw, config.pam_threshold)) {
      ++report.dropped_quality;
      continue;
    }
    TrackRecord rec = raw;
    rec.tags = names_only(tag_track(audio, vocab));
    if (rec.tempo_bpm) {
      std::string derived = derived_tempo_tag(*rec.tempo_bpm, config);
      if (vocab.has_tag(TagCategory::tempo, derived)) {
        rec.tags[TagCategory::tempo] = {derived};
      }
    }
    rec.description = compose_description(rec.tags, rec.metadata);
    manifest.records.push_back(std::move(rec));
    ++report.kept;
  }
  manifest.validate();
  return {std::move(manifest), report};
}

namespace {

json tags_to_json(const TagNames& tags) {
  json out = json::object();
  for (const auto& [cat, names] : tags) out[to_string(cat)] = names;
  return out;
}

TagNames tags_from_json(const json& j) {
  TagNames out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out[category_from_string(it.key())] = it.value().get<std::vector<std::string>>();
  }
  return out;
}

}  // namespace

TagVocabulary load_vocabulary(const std::filesystem::path& path, const EmbeddingStore& store) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("vocabulary " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw FormatError("vocabulary " + path.string() + ": expected an object");
  TagVocabulary vocab;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() == "vocal_embedding_ids") {
      vocab.vocal_embedding_ids = it.value().get<std::vector<std::string>>();
      continue;
    }
    TagCategory cat = category_from_string(it.key());
    for (const json& e : it.value()) {
      TagEntry entry;
      entry.name = e.at("tag").get<std::string>();
      entry.threshold = e.value("threshold", 0.3);
      std::string emb_id = e.at("embedding_id").get<std::string>();
      if (!store.contains(emb_id)) {
        throw ValidationError("vocabulary: embedding id \"" + emb_id + "\" for tag \"" +
                              entry.name + "\" not found in store");
      }
      entry.embedding = store.at(emb_id);
      vocab.add(cat, std::move(entry));
    }
  }
  return vocab;
}

std::vector<TrackRecord> load_track_records(const std::filesystem::path& path) {
  std::string data = read_file(path);
  std::vector<TrackRecord> records;
  std::istringstream lines(data);
  std::string line;
  size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("manifest " + path.string() + " line " + std::to_string(lineno) + ": " +
                        e.what());
    }
    TrackRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.duration_s = j.value("duration_s", 0.0);
      r.pam_score = j.at("pam_score").get<double>();
      r.audio_embedding_id = j.at("audio_embedding_id").get<std::string>();
      if (j.contains("tempo_bpm") && !j["tempo_bpm"].is_null()) {
        r.tempo_bpm = j["tempo_bpm"].get<double>();
      }
      if (j.contains("tags")) r.tags = tags_from_json(j["tags"]);
      r.description = j.value("description", "");
      if (j.contains("metadata")) {
        r.metadata = j["metadata"].get<std::map<std::string, std::string>>();
      }
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path.string() + " line " + std::to_string(lineno) + ": " +
                        e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_track_records(const std::vector<TrackRecord>& records,
                        const std::filesystem::path& path) {
  std::ostringstream out;
  for (const TrackRecord& r : records) {
    json j;
    j["id"] = r.id;
    j["duration_s"] = r.duration_s;
    j["pam_score"] = r.pam_score;
    j["audio_embedding_id"] = r.audio_embedding_id;
    if (r.tempo_bpm) j["tempo_bpm"] = *r.tempo_bpm;
    if (!r.tags.empty()) j["tags"] = tags_to_json(r.tags);
    if (!r.description.empty()) j["description"] = r.description;
    if (!r.metadata.empty()) j["metadata"] = r.metadata;
    out << j.dump() << "\n";
  }
  write_file(path, out.str());
}

std::string ingest_report_json(const IngestReport& report) {
  json j;
  j["input"] = report.input;
  j["dropped_vocal"] = report.dropped_vocal;
  j["dropped_quality"] = report.dropped_quality;
  j["kept"] = report.kept;
  return j.dump(2);
}

}  // namespace vmb
