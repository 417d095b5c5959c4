#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vmb {

enum class EmbeddingSpace : uint8_t { audio = 0, text = 1, visual = 2 };

std::string to_string(EmbeddingSpace space);
EmbeddingSpace space_from_string(const std::string& name);

// Dense real vector tagged with the joint space it lives in. Values are kept
// in double precision in memory; persistence quantizes to 32-bit floats.
struct EmbeddingVector {
  std::vector<double> values;
  EmbeddingSpace space = EmbeddingSpace::audio;

  EmbeddingVector() = default;
  EmbeddingVector(std::vector<double> v, EmbeddingSpace s) : values(std::move(v)), space(s) {}

  size_t dim() const { return values.size(); }
  double l2_norm() const;
  // Throws ValidationError on NaN/Inf entries or empty payload.
  void check_finite() const;

  bool operator==(const EmbeddingVector&) const = default;
};

// cos(a, b) = a.b / (|a| |b|), computed in double precision.
// Throws DimensionError on dim or space mismatch, DegenerateVectorError on
// zero-norm input.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Unit-norm copy of v; idempotent. Throws DegenerateVectorError on zero norm.
EmbeddingVector normalize(const EmbeddingVector& v);

// Deterministic stand-in for a pretrained encoder: identical
// (content, space, dim, seed) always yields the identical unit vector, and
// distinct contents land in pseudo-random directions. Requires dim >= 2.
EmbeddingVector stub_embed(std::string_view content, EmbeddingSpace space, size_t dim,
                           uint64_t seed);

// Immutable map id -> vector, all sharing one space and dimension.
class EmbeddingStore {
 public:
  EmbeddingStore(EmbeddingSpace space, size_t dim) : space_(space), dim_(dim) {}

  EmbeddingSpace space() const { return space_; }
  size_t dim() const { return dim_; }
  size_t size() const { return entries_.size(); }

  // Throws ValidationError on empty/duplicate id or dim/space mismatch.
  void insert(const std::string& id, EmbeddingVector vec);
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  // Throws ValidationError when the id is unknown.
  const EmbeddingVector& at(const std::string& id) const;
  // Sorted by id.
  const std::map<std::string, EmbeddingVector>& entries() const { return entries_; }

  bool operator==(const EmbeddingStore&) const = default;

 private:
  EmbeddingSpace space_;
  size_t dim_;
  std::map<std::string, EmbeddingVector> entries_;
};

// "VMBE" container: header {magic, version u16, space u8, dim u32, count u64}
// then per entry {id len u16, id bytes, dim little-endian f32}. Entries are
// written sorted by id so equal stores serialize to equal bytes.
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_store(const std::filesystem::path& path);

// In-memory codecs behind the file API; used by tests and store fingerprints.
std::string encode_store(const EmbeddingStore& store);
EmbeddingStore decode_store(const std::string& bytes);

}  // namespace vmb
