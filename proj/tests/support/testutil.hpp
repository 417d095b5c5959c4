#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "vmb/binary_io.hpp"
#include "vmb/embedding.hpp"
#include "vmb/latent.hpp"
#include "vmb/rng.hpp"

namespace vmbtest {

// Self-cleaning scratch directory for file round-trip tests.
class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    static std::atomic<uint64_t> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vmb-" + label + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline vmb::EmbeddingVector random_unit_vector(vmb::SeededRng& rng, size_t dim,
                                               vmb::EmbeddingSpace space) {
  vmb::EmbeddingVector v;
  v.space = space;
  v.values.resize(dim);
  for (double& x : v.values) x = rng.normal();
  return vmb::normalize(v);
}

inline vmb::Mat random_mat(vmb::SeededRng& rng, Eigen::Index rows, Eigen::Index cols) {
  vmb::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  return vmb::read_file(p);
}

}  // namespace vmbtest
