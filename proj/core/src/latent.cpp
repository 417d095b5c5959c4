#include "vmb/latent.hpp"

#include <cmath>

#include "vmb/binary_io.hpp"
#include "vmb/errors.hpp"
#include "vmb/rng.hpp"

namespace vmb {

namespace {
constexpr uint16_t kLatentVersion = 1;
constexpr std::string_view kLatentMagic = "VMBL";
}  // namespace

void LatentSequence::check() const {
  if (data.rows() < 1 || data.cols() < 1) throw ValidationError("latent: empty sequence");
  if (!data.allFinite()) throw ValidationError("latent: non-finite entries");
}

std::string encode_latent(const LatentSequence& latent) {
  latent.check();
  BinaryWriter w;
  w.bytes(kLatentMagic);
  w.u16(kLatentVersion);
  w.u32(static_cast<uint32_t>(latent.frames()));
  w.u32(static_cast<uint32_t>(latent.dim()));
  for (Eigen::Index i = 0; i < latent.frames(); ++i) {
    for (Eigen::Index j = 0; j < latent.dim(); ++j) {
      w.f32(static_cast<float>(latent.data(i, j)));
    }
  }
  return w.buffer();
}

LatentSequence decode_latent(const std::string& bytes) {
  BinaryReader r(bytes);
  r.expect_magic(kLatentMagic);
  uint16_t version = r.u16();
  if (version != kLatentVersion) {
    throw FormatError("latent: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
  uint32_t frames = r.u32();
  uint32_t dim = r.u32();
  if (frames == 0 || dim == 0) throw FormatError("latent: zero shape at byte offset 6");
  LatentSequence out;
  out.data.resize(frames, dim);
  for (uint32_t i = 0; i < frames; ++i) {
    for (uint32_t j = 0; j < dim; ++j) {
      float v = r.f32();
      if (!std::isfinite(v)) {
        throw FormatError("latent: non-finite value at byte offset " +
                          std::to_string(r.offset() - 4));
      }
      out.data(i, j) = v;
    }
  }
  r.require_end();
  return out;
}

void save_latent(const LatentSequence& latent, const std::filesystem::path& path) {
  write_file(path, encode_latent(latent));
}

LatentSequence load_latent(const std::filesystem::path& path) {
  return decode_latent(read_file(path));
}

LatentSequence synthetic_latent(const std::string& track_id, Eigen::Index frames,
                                Eigen::Index dim, uint64_t seed) {
  if (frames < 1 || dim < 1) throw ConfigError("synthetic_latent: shape must be positive");
  SeededRng rng(derive_seed(fnv1a64(track_id), seed));
  LatentSequence out;
  out.data.resize(frames, dim);
  for (Eigen::Index i = 0; i < frames; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) out.data(i, j) = rng.normal();
  }
  return out;
}

LatentSequence align_frames(const LatentSequence& latent, Eigen::Index frames) {
  latent.check();
  if (frames < 1) throw ShapeError("align_frames: target frame count must be positive");
  LatentSequence out;
  out.data.resize(frames, latent.dim());
  for (Eigen::Index i = 0; i < frames; ++i) {
    out.data.row(i) = latent.data.row(i % latent.frames());
  }
  return out;
}

}  // namespace vmb
