#include "vmb/checkpoint.hpp"

#include <cmath>

#include "vmb/binary_io.hpp"
#include "vmb/errors.hpp"

namespace vmb {

namespace {
constexpr uint16_t kCheckpointVersion = 1;
constexpr std::string_view kCheckpointMagic = "VMBC";

void write_tensor(BinaryWriter& w, const std::string& name, const Mat& m) {
  w.str16(name);
  w.u32(static_cast<uint32_t>(m.rows()));
  w.u32(static_cast<uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.config.validate();
  BinaryWriter w;
  w.bytes(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(ckpt.config.n_layers));
  w.u32(static_cast<uint32_t>(ckpt.config.d_model));
  w.u32(static_cast<uint32_t>(ckpt.config.n_heads));
  w.u32(static_cast<uint32_t>(ckpt.config.d_latent));
  w.u32(static_cast<uint32_t>(ckpt.config.d_text));
  w.u32(static_cast<uint32_t>(ckpt.config.max_text_tokens));
  w.u32(static_cast<uint32_t>(ckpt.config.control_layers));
  w.u32(static_cast<uint32_t>(ckpt.config.d_style));
  w.u32(static_cast<uint32_t>(ckpt.config.max_frames));

  size_t count = ckpt.params.tensors.size();
  if (ckpt.control) count += ckpt.control->params.tensors.size();
  w.u64(count);
  // Both maps are name-ordered and "base."/"style." sort before "control."
  // only by accident of content, so merge explicitly to keep global order.
  auto base_it = ckpt.params.tensors.begin();
  auto base_end = ckpt.params.tensors.end();
  std::map<std::string, Mat>::const_iterator ctrl_it, ctrl_end;
  if (ckpt.control) {
    ctrl_it = ckpt.control->params.tensors.begin();
    ctrl_end = ckpt.control->params.tensors.end();
  }
  while (base_it != base_end || (ckpt.control && ctrl_it != ctrl_end)) {
    bool take_base = base_it != base_end &&
                     (!ckpt.control || ctrl_it == ctrl_end || base_it->first < ctrl_it->first);
    if (take_base) {
      write_tensor(w, base_it->first, base_it->second);
      ++base_it;
    } else {
      write_tensor(w, ctrl_it->first, ctrl_it->second);
      ++ctrl_it;
    }
  }
  return w.buffer();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  BinaryReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
  Checkpoint ckpt;
  ckpt.config.n_layers = static_cast<int>(r.u32());
  ckpt.config.d_model = static_cast<int>(r.u32());
  ckpt.config.n_heads = static_cast<int>(r.u32());
  ckpt.config.d_latent = static_cast<int>(r.u32());
  ckpt.config.d_text = static_cast<int>(r.u32());
  ckpt.config.max_text_tokens = static_cast<int>(r.u32());
  ckpt.config.control_layers = static_cast<int>(r.u32());
  ckpt.config.d_style = static_cast<int>(r.u32());
  ckpt.config.max_frames = static_cast<int>(r.u32());
  try {
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid config block: ") + e.what());
  }

  uint64_t count = r.u64();
  for (uint64_t i = 0; i < count; ++i) {
    size_t at = r.offset();
    std::string name = r.str16();
    uint32_t rows = r.u32();
    uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) {
      throw FormatError("checkpoint: empty tensor \"" + name + "\" at byte offset " +
                        std::to_string(at));
    }
    Mat m(rows, cols);
    for (uint32_t a = 0; a < rows; ++a) {
      for (uint32_t b = 0; b < cols; ++b) {
        float v = r.f32();
        if (!std::isfinite(v)) {
          throw FormatError("checkpoint: non-finite value in \"" + name + "\" at byte offset " +
                            std::to_string(r.offset() - 4));
        }
        m(a, b) = v;
      }
    }
    if (name.rfind("control.", 0) == 0) {
      if (!ckpt.control) ckpt.control = ControlFormerState{};
      if (!ckpt.control->params.tensors.emplace(name, std::move(m)).second) {
        throw FormatError("checkpoint: duplicate tensor \"" + name + "\" at byte offset " +
                          std::to_string(at));
      }
    } else if (!ckpt.params.tensors.emplace(name, std::move(m)).second) {
      throw FormatError("checkpoint: duplicate tensor \"" + name + "\" at byte offset " +
                        std::to_string(at));
    }
  }
  if (ckpt.control) ckpt.control->num_layers = ckpt.config.control_layers;
  r.require_end();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace vmb
