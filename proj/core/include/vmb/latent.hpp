#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>

namespace vmb {

// All model math runs on row-major double matrices.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Frame-by-dimension matrix standing in for encoded audio.
struct LatentSequence {
  Mat data;  // [frames x d_latent]

  LatentSequence() = default;
  explicit LatentSequence(Mat m) : data(std::move(m)) {}

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
  // Throws ValidationError on empty or non-finite payload.
  void check() const;

  bool operator==(const LatentSequence& other) const { return data == other.data; }
};

// ".vmbl" latent file: magic "VMBL", version u16, frames u32, dim u32,
// row-major little-endian f32 payload.
void save_latent(const LatentSequence& latent, const std::filesystem::path& path);
LatentSequence load_latent(const std::filesystem::path& path);
std::string encode_latent(const LatentSequence& latent);
LatentSequence decode_latent(const std::string& bytes);

// Deterministic synthetic latent for a track id; the desk-scale stand-in
// for a pretrained audio codec.
LatentSequence synthetic_latent(const std::string& track_id, Eigen::Index frames,
                                Eigen::Index dim, uint64_t seed);

// Aligns a control latent to the generation length: truncates when longer,
// loop-pads when shorter.
LatentSequence align_frames(const LatentSequence& latent, Eigen::Index frames);

}  // namespace vmb
