#include "vmb/synthetic.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vmb/binary_io.hpp"
#include "vmb/errors.hpp"
#include "vmb/rng.hpp"

namespace vmb {

using nlohmann::json;

namespace {

const std::map<TagCategory, std::vector<std::string>> kDemoTags = {
    {TagCategory::instrument, {"piano", "guitar", "drums", "violin"}},
    {TagCategory::genre, {"rock", "jazz", "classical", "electronic"}},
    {TagCategory::mood, {"happy", "sad", "calm", "energetic"}},
    {TagCategory::tempo, {"fast", "medium", "slow"}},
};

const std::vector<std::string> kVocalMarkers = {"vocal", "choir", "human voice"};

std::string tag_embedding_id(const std::string& tag) { return "tag:" + tag; }

EmbeddingVector demo_tag_vector(const std::string& tag, size_t dim, uint64_t seed) {
  return stub_embed(tag_embedding_id(tag), EmbeddingSpace::audio, dim, seed);
}

// Removes each marker direction from v so the vocal gate scores ~0.
void orthogonalize_against(EmbeddingVector& v, const std::vector<EmbeddingVector>& markers) {
  for (const EmbeddingVector& m : markers) {
    double dot = 0.0;
    for (size_t i = 0; i < v.values.size(); ++i) dot += v.values[i] * m.values[i];
    for (size_t i = 0; i < v.values.size(); ++i) v.values[i] -= dot * m.values[i];
  }
}

}  // namespace

std::map<EmbeddingSpace, StoreRef> DemoWorld::store_refs() const {
  std::map<EmbeddingSpace, StoreRef> refs;
  refs[EmbeddingSpace::audio] = StoreRef{"", audio_store};
  if (text_store) refs[EmbeddingSpace::text] = StoreRef{"", text_store};
  return refs;
}

DemoWorld build_demo_world(const DemoWorldConfig& config) {
  if (config.n_tracks < 1) throw ConfigError("demo world: need at least one track");
  if (config.n_vocal + config.n_low_quality > config.n_tracks) {
    throw ConfigError("demo world: more flagged tracks than tracks");
  }

  DemoWorld world;
  auto audio = std::make_shared<EmbeddingStore>(EmbeddingSpace::audio, config.embedding_dim);

  std::vector<EmbeddingVector> vocal_vecs;
  for (const std::string& marker : kVocalMarkers) {
    EmbeddingVector v = demo_tag_vector(marker, config.embedding_dim, config.seed);
    audio->insert(tag_embedding_id(marker), v);
    world.vocabulary.vocal_embedding_ids.push_back(tag_embedding_id(marker));
    vocal_vecs.push_back(std::move(v));
  }

  for (const auto& [cat, tags] : kDemoTags) {
    for (const std::string& tag : tags) {
      EmbeddingVector v = demo_tag_vector(tag, config.embedding_dim, config.seed);
      orthogonalize_against(v, vocal_vecs);
      v = normalize(v);
      audio->insert(tag_embedding_id(tag), v);
      world.vocabulary.add(cat, TagEntry{tag, v, 0.3});
    }
  }

  SeededRng rng(derive_seed(config.seed, fnv1a64("demo-world")));
  std::shared_ptr<EmbeddingStore> text;
  if (config.with_text_store) {
    text = std::make_shared<EmbeddingStore>(EmbeddingSpace::text, config.embedding_dim);
  }

  for (size_t i = 0; i < config.n_tracks; ++i) {
    std::ostringstream id_s;
    id_s << "track" << (i < 10 ? "0" : "") << i;
    std::string id = id_s.str();
    bool vocal = i < config.n_vocal;
    bool low_quality = !vocal && i < config.n_vocal + config.n_low_quality;

    auto pick = [&](TagCategory cat) {
      const auto& tags = kDemoTags.at(cat);
      return tags[rng.below(tags.size())];
    };
    std::string instrument = pick(TagCategory::instrument);
    std::string genre = pick(TagCategory::genre);
    std::string mood = pick(TagCategory::mood);
    std::string tempo = pick(TagCategory::tempo);

    EmbeddingVector emb;
    emb.space = EmbeddingSpace::audio;
    emb.values.assign(config.embedding_dim, 0.0);
    for (const std::string& tag : {instrument, genre, mood}) {
      const EmbeddingVector& dir = audio->at(tag_embedding_id(tag));
      for (size_t j = 0; j < emb.values.size(); ++j) emb.values[j] += dir.values[j];
    }
    for (double& x : emb.values) x += config.noise_mix * rng.normal() / std::sqrt(8.0);
    if (vocal) {
      const EmbeddingVector& dir = vocal_vecs[i % vocal_vecs.size()];
      for (size_t j = 0; j < emb.values.size(); ++j) emb.values[j] += 3.0 * dir.values[j];
    } else {
      orthogonalize_against(emb, vocal_vecs);
    }
    emb = normalize(emb);
    std::string emb_id = "aud:" + id;
    audio->insert(emb_id, emb);

    TrackRecord rec;
    rec.id = id;
    rec.audio_embedding_id = emb_id;
    double bpm = tempo == "fast"   ? 124.0 + static_cast<double>(rng.below(36))
                 : tempo == "slow" ? 52.0 + static_cast<double>(rng.below(24))
                                   : 84.0 + static_cast<double>(rng.below(32));
    rec.tempo_bpm = bpm;
    rec.duration_s = 12.0 + static_cast<double>(rng.below(20));
    rec.pam_score = low_quality ? 0.90 : 0.96 + 0.03 * rng.uniform01();
    rec.metadata["source"] = "synthetic";
    world.raw_records.push_back(std::move(rec));

    if (text) {
      text->insert(id, stub_embed("text:" + id, EmbeddingSpace::text, config.embedding_dim,
                                  config.seed));
    }
  }

  world.audio_store = std::move(audio);
  world.text_store = std::move(text);
  return world;
}

void write_demo_world(const DemoWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_store(*world.audio_store, dir / "audio.vmbe");
  if (world.text_store) save_store(*world.text_store, dir / "text.vmbe");

  json vocab = json::object();
  for (const auto& [cat, tags] : kDemoTags) {
    json list = json::array();
    for (const std::string& tag : tags) {
      list.push_back({{"tag", tag}, {"threshold", 0.3}, {"embedding_id", tag_embedding_id(tag)}});
    }
    vocab[to_string(cat)] = list;
  }
  vocab["vocal_embedding_ids"] = world.vocabulary.vocal_embedding_ids;
  write_file(dir / "vocab.json", vocab.dump(2) + "\n");

  save_track_records(world.raw_records, dir / "raw_manifest.jsonl");
}

}  // namespace vmb
