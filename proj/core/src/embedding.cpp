#include "vmb/embedding.hpp"

#include <cmath>

#include "vmb/binary_io.hpp"
#include "vmb/errors.hpp"
#include "vmb/rng.hpp"

namespace vmb {

namespace {
constexpr uint16_t kStoreVersion = 1;
constexpr std::string_view kStoreMagic = "VMBE";
}  // namespace

std::string to_string(EmbeddingSpace space) {
  switch (space) {
    case EmbeddingSpace::audio: return "audio";
    case EmbeddingSpace::text: return "text";
    case EmbeddingSpace::visual: return "visual";
  }
  return "unknown";
}

EmbeddingSpace space_from_string(const std::string& name) {
  if (name == "audio") return EmbeddingSpace::audio;
  if (name == "text") return EmbeddingSpace::text;
  if (name == "visual") return EmbeddingSpace::visual;
  throw ValidationError("unknown embedding space: " + name);
}

double EmbeddingVector::l2_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

void EmbeddingVector::check_finite() const {
  if (values.empty()) throw ValidationError("empty embedding vector");
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("non-finite entry in embedding vector");
  }
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()) + ")");
  }
  if (a.space != b.space) {
    throw DimensionError("cosine: embedding spaces differ (" + to_string(a.space) + " vs " +
                         to_string(b.space) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine: zero-norm input");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

EmbeddingVector normalize(const EmbeddingVector& v) {
  double n = v.l2_norm();
  if (n == 0.0) throw DegenerateVectorError("normalize: zero-norm input");
  EmbeddingVector out = v;
  for (double& x : out.values) x /= n;
  return out;
}

EmbeddingVector stub_embed(std::string_view content, EmbeddingSpace space, size_t dim,
                           uint64_t seed) {
  if (dim < 2) throw ConfigError("stub_embed: dim must be >= 2, got " + std::to_string(dim));
  uint64_t h = fnv1a64(content);
  h = derive_seed(h, static_cast<uint64_t>(space) + 1);
  h = derive_seed(h, dim);
  h = derive_seed(h, seed);
  SeededRng rng(h);
  EmbeddingVector vec;
  vec.space = space;
  vec.values.resize(dim);
  double norm = 0.0;
  do {
    for (double& x : vec.values) x = rng.normal();
    norm = vec.l2_norm();
  } while (norm < 1e-12);  // a zero draw is astronomically unlikely; redraw if it happens
  for (double& x : vec.values) x /= norm;
  return vec;
}

void EmbeddingStore::insert(const std::string& id, EmbeddingVector vec) {
  if (id.empty()) throw ValidationError("store: empty id");
  if (vec.dim() != dim_) {
    throw ValidationError("store: vector for \"" + id + "\" has dim " + std::to_string(vec.dim()) +
                          ", store dim is " + std::to_string(dim_));
  }
  if (vec.space != space_) {
    throw ValidationError("store: vector for \"" + id + "\" is in space " + to_string(vec.space) +
                          ", store space is " + to_string(space_));
  }
  vec.check_finite();
  if (!entries_.emplace(id, std::move(vec)).second) {
    throw ValidationError("store: duplicate id \"" + id + "\"");
  }
}

const EmbeddingVector& EmbeddingStore::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw ValidationError("store: unknown id \"" + id + "\"");
  return it->second;
}

std::string encode_store(const EmbeddingStore& store) {
  BinaryWriter w;
  w.bytes(kStoreMagic);
  w.u16(kStoreVersion);
  w.u8(static_cast<uint8_t>(store.space()));
  w.u32(static_cast<uint32_t>(store.dim()));
  w.u64(store.entries().size());
  for (const auto& [id, vec] : store.entries()) {
    w.str16(id);
    for (double v : vec.values) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

EmbeddingStore decode_store(const std::string& bytes) {
  BinaryReader r(bytes);
  r.expect_magic(kStoreMagic);
  uint16_t version = r.u16();
  if (version != kStoreVersion) {
    throw FormatError("store: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
  uint8_t space_tag = r.u8();
  if (space_tag > 2) {
    throw FormatError("store: invalid space tag " + std::to_string(space_tag) +
                      " at byte offset 6");
  }
  EmbeddingSpace space = static_cast<EmbeddingSpace>(space_tag);
  uint32_t dim = r.u32();
  if (dim == 0) throw FormatError("store: zero dim at byte offset 7");
  uint64_t count = r.u64();
  EmbeddingStore store(space, dim);
  for (uint64_t i = 0; i < count; ++i) {
    size_t at = r.offset();
    std::string id = r.str16();
    if (id.empty()) throw FormatError("store: empty id at byte offset " + std::to_string(at));
    if (store.contains(id)) {
      throw FormatError("store: duplicate id \"" + id + "\" at byte offset " + std::to_string(at));
    }
    EmbeddingVector vec;
    vec.space = space;
    vec.values.resize(dim);
    for (uint32_t j = 0; j < dim; ++j) {
      float v = r.f32();
      if (!std::isfinite(v)) {
        throw FormatError("store: non-finite value in \"" + id + "\" at byte offset " +
                          std::to_string(r.offset() - 4));
      }
      vec.values[j] = static_cast<double>(v);
    }
    store.insert(id, std::move(vec));
  }
  r.require_end();
  return store;
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file(path, encode_store(store));
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  return decode_store(read_file(path));
}

}  // namespace vmb
