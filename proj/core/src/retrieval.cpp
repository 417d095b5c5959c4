#include "vmb/retrieval.hpp"

#include <algorithm>
#include <set>

#include "vmb/binary_io.hpp"
#include "vmb/errors.hpp"
#include "vmb/rng.hpp"

namespace vmb {

namespace {
constexpr uint16_t kIndexVersion = 1;
constexpr std::string_view kIndexMagic = "VMBI";
}  // namespace

const EmbeddingVector& RetrievalIndex::embedding_of(EmbeddingSpace space,
                                                    const std::string& track_id) const {
  auto view_it = broad.find(space);
  if (view_it == broad.end()) {
    throw ValidationError("index: no view for space " + to_string(space));
  }
  auto it = view_it->second.find(track_id);
  if (it == view_it->second.end()) {
    throw ValidationError("index: track \"" + track_id + "\" has no embedding in space " +
                          to_string(space));
  }
  return manifest.store(space).at(it->second);
}

RetrievalIndex build_index(const DatasetManifest& manifest) {
  RetrievalIndex index;
  index.manifest = manifest;

  std::set<std::string> seen;
  for (const TrackRecord& r : manifest.records) {
    if (!seen.insert(r.id).second) {
      throw ValidationError("index: duplicate track id \"" + r.id + "\"");
    }
  }

  const bool have_audio = manifest.has_store(EmbeddingSpace::audio);
  for (const TrackRecord& r : manifest.records) {
    if (!have_audio || !manifest.store(EmbeddingSpace::audio).contains(r.audio_embedding_id)) {
      index.excluded.push_back(r.id);
      continue;
    }
    index.broad[EmbeddingSpace::audio][r.id] = r.audio_embedding_id;
    // Text/visual views are keyed by track id; a track absent from a space's
    // store is simply not a candidate in that space.
    for (EmbeddingSpace s : {EmbeddingSpace::text, EmbeddingSpace::visual}) {
      if (manifest.has_store(s) && manifest.store(s).contains(r.id)) {
        index.broad[s][r.id] = r.id;
      }
    }
  }
  std::sort(index.excluded.begin(), index.excluded.end());

  for (TagCategory cat : kPartitionCategories) {
    auto& partition = index.partitions[cat];
    for (const TagEntry& entry : manifest.vocabulary.category(cat)) {
      partition[entry.name];  // every subset exists, possibly empty
    }
  }
  for (const TrackRecord& r : manifest.records) {
    if (!index.broad[EmbeddingSpace::audio].count(r.id)) continue;
    const EmbeddingVector& audio = manifest.store(EmbeddingSpace::audio).at(r.audio_embedding_id);
    for (TagCategory cat : kPartitionCategories) {
      auto tags_it = r.tags.find(cat);
      if (tags_it == r.tags.end() || tags_it->second.empty()) continue;
      // Disjointness rule: membership goes to the top-scoring tag only.
      std::string best_tag;
      double best_score = 0.0;
      for (const std::string& name : tags_it->second) {
        bool found = false;
        double score = 0.0;
        for (const TagEntry& entry : manifest.vocabulary.category(cat)) {
          if (entry.name == name) {
            score = cosine_similarity(entry.embedding, audio);
            found = true;
            break;
          }
        }
        if (!found) {
          throw ValidationError("index: track \"" + r.id + "\" carries tag \"" + name +
                                "\" unknown to category " + to_string(cat));
        }
        if (best_tag.empty() || score > best_score ||
            (score == best_score && name < best_tag)) {
          best_tag = name;
          best_score = score;
        }
      }
      index.partitions[cat][best_tag].push_back(r.id);
    }
  }
  for (auto& [cat, partition] : index.partitions) {
    for (auto& [name, ids] : partition) std::sort(ids.begin(), ids.end());
  }
  return index;
}

namespace {

std::vector<RetrievalResult> scan_view(const EmbeddingVector& query, EmbeddingSpace space,
                                       const RetrievalIndex& index,
                                       const std::string* excluded_id, size_t k) {
  if (k == 0) throw ConfigError("retrieve: k must be positive");
  if (query.space != space) {
    throw DimensionError("retrieve: query space " + to_string(query.space) +
                         " does not match requested space " + to_string(space));
  }
  auto view_it = index.broad.find(space);
  if (view_it == index.broad.end() || view_it->second.empty()) {
    throw EmptyIndexError("retrieve: no candidates in space " + to_string(space));
  }
  const EmbeddingStore& store = index.manifest.store(space);
  std::vector<RetrievalResult> all;
  all.reserve(view_it->second.size());
  for (const auto& [track_id, emb_id] : view_it->second) {
    if (excluded_id && track_id == *excluded_id) continue;
    all.push_back({track_id, cosine_similarity(query, store.at(emb_id)), 0});
  }
  if (all.empty()) {
    throw EmptyIndexError("retrieve: no candidates left in space " + to_string(space));
  }
  std::sort(all.begin(), all.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.track_id < b.track_id;
  });
  if (all.size() > k) all.resize(k);
  for (size_t i = 0; i < all.size(); ++i) all[i].rank = i + 1;
  return all;
}

}  // namespace

std::vector<RetrievalResult> broad_retrieve(const EmbeddingVector& query, EmbeddingSpace space,
                                            const RetrievalIndex& index, size_t k) {
  return scan_view(query, space, index, nullptr, k);
}

std::vector<RetrievalResult> broad_retrieve_excluding(const EmbeddingVector& query,
                                                      EmbeddingSpace space,
                                                      const RetrievalIndex& index,
                                                      const std::string& excluded_id, size_t k) {
  return scan_view(query, space, index, &excluded_id, k);
}

RetrievalResult targeted_retrieve(const std::string& attribute_text, TagCategory category,
                                  const std::string& subset, const RetrievalIndex& index,
                                  const AttributeEmbedder& embedder) {
  auto cat_it = index.partitions.find(category);
  if (cat_it == index.partitions.end()) {
    throw PartitionError("targeted: no partition for category " + to_string(category));
  }
  auto subset_it = cat_it->second.find(subset);
  if (subset_it == cat_it->second.end()) {
    throw PartitionError("targeted: unknown subset \"" + subset + "\" in category " +
                         to_string(category));
  }
  if (subset_it->second.empty()) {
    throw EmptyPartitionError("targeted: subset \"" + subset + "\" in category " +
                              to_string(category) + " is empty");
  }
  EmbeddingVector desired = embedder.embed(attribute_text);
  RetrievalResult best;
  bool first = true;
  for (const std::string& track_id : subset_it->second) {  // ascending id
    double score = cosine_similarity(desired, index.embedding_of(EmbeddingSpace::audio, track_id));
    if (first || score > best.score) {
      best = {track_id, score, 1};
      first = false;
    }
  }
  return best;
}

namespace {

void write_vocabulary(BinaryWriter& w, const TagVocabulary& vocab) {
  w.u8(static_cast<uint8_t>(kAllCategories.size()));
  for (TagCategory cat : kAllCategories) {
    w.u8(static_cast<uint8_t>(cat));
    const auto& entries = vocab.category(cat);
    w.u16(static_cast<uint16_t>(entries.size()));
    for (const TagEntry& e : entries) {
      w.str16(e.name);
      w.f64(e.threshold);
      w.u8(static_cast<uint8_t>(e.embedding.space));
      w.u32(static_cast<uint32_t>(e.embedding.dim()));
      for (double v : e.embedding.values) w.f32(static_cast<float>(v));
    }
  }
  w.u16(static_cast<uint16_t>(vocab.vocal_embedding_ids.size()));
  for (const std::string& id : vocab.vocal_embedding_ids) w.str16(id);
}

TagVocabulary read_vocabulary(BinaryReader& r) {
  TagVocabulary vocab;
  uint8_t n_cats = r.u8();
  for (uint8_t c = 0; c < n_cats; ++c) {
    uint8_t cat_tag = r.u8();
    if (cat_tag > 3) {
      throw FormatError("index: bad category tag at byte offset " + std::to_string(r.offset() - 1));
    }
    TagCategory cat = static_cast<TagCategory>(cat_tag);
    uint16_t n = r.u16();
    for (uint16_t i = 0; i < n; ++i) {
      TagEntry e;
      e.name = r.str16();
      e.threshold = r.f64();
      uint8_t space_tag = r.u8();
      if (space_tag > 2) {
        throw FormatError("index: bad space tag at byte offset " + std::to_string(r.offset() - 1));
      }
      e.embedding.space = static_cast<EmbeddingSpace>(space_tag);
      uint32_t dim = r.u32();
      e.embedding.values.resize(dim);
      for (uint32_t j = 0; j < dim; ++j) e.embedding.values[j] = r.f32();
      vocab.add(cat, std::move(e));
    }
  }
  uint16_t n_vocal = r.u16();
  for (uint16_t i = 0; i < n_vocal; ++i) vocab.vocal_embedding_ids.push_back(r.str16());
  return vocab;
}

void write_record(BinaryWriter& w, const TrackRecord& rec) {
  w.str16(rec.id);
  w.f64(rec.duration_s);
  w.f64(rec.pam_score);
  w.u8(rec.tempo_bpm ? 1 : 0);
  if (rec.tempo_bpm) w.f64(*rec.tempo_bpm);
  w.str16(rec.audio_embedding_id);
  w.str16(rec.description);
  w.u8(static_cast<uint8_t>(rec.tags.size()));
  for (const auto& [cat, names] : rec.tags) {
    w.u8(static_cast<uint8_t>(cat));
    w.u16(static_cast<uint16_t>(names.size()));
    for (const std::string& name : names) w.str16(name);
  }
  w.u16(static_cast<uint16_t>(rec.metadata.size()));
  for (const auto& [k, v] : rec.metadata) {
    w.str16(k);
    w.str16(v);
  }
}

TrackRecord read_record(BinaryReader& r) {
  TrackRecord rec;
  rec.id = r.str16();
  rec.duration_s = r.f64();
  rec.pam_score = r.f64();
  if (r.u8()) rec.tempo_bpm = r.f64();
  rec.audio_embedding_id = r.str16();
  rec.description = r.str16();
  uint8_t n_cats = r.u8();
  for (uint8_t c = 0; c < n_cats; ++c) {
    TagCategory cat = static_cast<TagCategory>(r.u8());
    uint16_t n = r.u16();
    std::vector<std::string> names(n);
    for (uint16_t i = 0; i < n; ++i) names[i] = r.str16();
    rec.tags[cat] = std::move(names);
  }
  uint16_t n_meta = r.u16();
  for (uint16_t i = 0; i < n_meta; ++i) {
    std::string k = r.str16();
    rec.metadata[k] = r.str16();
  }
  return rec;
}

}  // namespace

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  BinaryWriter w;
  w.bytes(kIndexMagic);
  w.u16(kIndexVersion);

  w.u8(static_cast<uint8_t>(index.manifest.stores.size()));
  for (const auto& [space, ref] : index.manifest.stores) {
    if (ref.path.empty()) {
      throw ValidationError("save_index: store for space " + to_string(space) +
                            " is not file-backed");
    }
    std::filesystem::path rel =
        std::filesystem::proximate(ref.path, path.parent_path().empty() ? "." : path.parent_path());
    w.u8(static_cast<uint8_t>(space));
    w.str16(rel.generic_string());
    w.u64(fnv1a64(encode_store(*ref.store)));
  }

  write_vocabulary(w, index.manifest.vocabulary);

  w.u64(index.manifest.records.size());
  for (const TrackRecord& rec : index.manifest.records) write_record(w, rec);

  w.u8(static_cast<uint8_t>(index.broad.size()));
  for (const auto& [space, view] : index.broad) {
    w.u8(static_cast<uint8_t>(space));
    w.u64(view.size());
    for (const auto& [track_id, emb_id] : view) {
      w.str16(track_id);
      w.str16(emb_id);
    }
  }

  w.u8(static_cast<uint8_t>(index.partitions.size()));
  for (const auto& [cat, partition] : index.partitions) {
    w.u8(static_cast<uint8_t>(cat));
    w.u16(static_cast<uint16_t>(partition.size()));
    for (const auto& [name, ids] : partition) {
      w.str16(name);
      w.u64(ids.size());
      for (const std::string& id : ids) w.str16(id);
    }
  }

  w.u64(index.excluded.size());
  for (const std::string& id : index.excluded) w.str16(id);

  w.save(path);
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  BinaryReader r(read_file(path));
  r.expect_magic(kIndexMagic);
  uint16_t version = r.u16();
  if (version != kIndexVersion) {
    throw FormatError("index: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }

  RetrievalIndex index;
  std::filesystem::path base = path.parent_path();
  uint8_t n_stores = r.u8();
  for (uint8_t i = 0; i < n_stores; ++i) {
    uint8_t space_tag = r.u8();
    if (space_tag > 2) {
      throw FormatError("index: bad space tag at byte offset " + std::to_string(r.offset() - 1));
    }
    EmbeddingSpace space = static_cast<EmbeddingSpace>(space_tag);
    std::string rel = r.str16();
    uint64_t expect_hash = r.u64();
    std::filesystem::path store_path = base / rel;
    std::string bytes;
    try {
      bytes = read_file(store_path);
    } catch (const IoError&) {
      throw ValidationError("index: referenced embedding store missing: " + store_path.string());
    }
    if (fnv1a64(bytes) != expect_hash) {
      throw ValidationError("index: embedding store changed since indexing: " +
                            store_path.string());
    }
    StoreRef ref;
    ref.path = store_path.string();
    ref.store = std::make_shared<EmbeddingStore>(decode_store(bytes));
    index.manifest.stores[space] = std::move(ref);
  }

  index.manifest.vocabulary = read_vocabulary(r);

  uint64_t n_records = r.u64();
  index.manifest.records.reserve(n_records);
  for (uint64_t i = 0; i < n_records; ++i) index.manifest.records.push_back(read_record(r));

  uint8_t n_views = r.u8();
  for (uint8_t i = 0; i < n_views; ++i) {
    EmbeddingSpace space = static_cast<EmbeddingSpace>(r.u8());
    uint64_t n = r.u64();
    auto& view = index.broad[space];
    for (uint64_t j = 0; j < n; ++j) {
      std::string track_id = r.str16();
      view[track_id] = r.str16();
    }
  }

  uint8_t n_cats = r.u8();
  for (uint8_t i = 0; i < n_cats; ++i) {
    TagCategory cat = static_cast<TagCategory>(r.u8());
    uint16_t n_subsets = r.u16();
    auto& partition = index.partitions[cat];
    for (uint16_t j = 0; j < n_subsets; ++j) {
      std::string name = r.str16();
      uint64_t n_ids = r.u64();
      auto& ids = partition[name];
      ids.reserve(n_ids);
      for (uint64_t k = 0; k < n_ids; ++k) ids.push_back(r.str16());
    }
  }

  uint64_t n_excluded = r.u64();
  for (uint64_t i = 0; i < n_excluded; ++i) index.excluded.push_back(r.str16());
  r.require_end();
  return index;
}

}  // namespace vmb
