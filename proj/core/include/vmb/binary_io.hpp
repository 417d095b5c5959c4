#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vmb {

// Little-endian binary writer backed by an in-memory buffer.
class BinaryWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s) { buf_.append(s); }
  // Length-prefixed (u16) UTF-8 string.
  void str16(std::string_view s);

  const std::string& buffer() const { return buf_; }
  // Writes the buffer to disk; throws IoError on failure.
  void save(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

// Little-endian binary reader over a byte buffer. Every read checks bounds
// and reports the failing byte offset in the FormatError message.
class BinaryReader {
 public:
  explicit BinaryReader(std::string data) : data_(std::move(data)) {}

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  std::string bytes(size_t n);
  std::string str16();
  // Fixed magic check; throws FormatError naming the expected tag.
  void expect_magic(std::string_view magic);

  size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  void require_end() const;

 private:
  void need(size_t n) const;
  std::string data_;
  size_t pos_ = 0;
};

// Whole-file read; throws IoError if the file cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace vmb
