#include "vmb/binary_io.hpp"

#include <cstring>
#include <fstream>

#include "vmb/errors.hpp"

namespace vmb {

void BinaryWriter::u16(uint16_t v) {
  u8(static_cast<uint8_t>(v & 0xff));
  u8(static_cast<uint8_t>(v >> 8));
}

void BinaryWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::f32(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  u32(bits);
}

void BinaryWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  u64(bits);
}

void BinaryWriter::str16(std::string_view s) {
  if (s.size() > UINT16_MAX) {
    throw ValidationError("string too long for u16 length prefix: " + std::string(s.substr(0, 32)));
  }
  u16(static_cast<uint16_t>(s.size()));
  bytes(s);
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  write_file(path, buf_);
}

void BinaryReader::need(size_t n) const {
  if (pos_ + n > data_.size()) {
    throw FormatError("truncated file: need " + std::to_string(n) + " bytes at byte offset " +
                      std::to_string(pos_) + ", have " + std::to_string(data_.size() - pos_));
  }
}

uint8_t BinaryReader::u8() {
  need(1);
  return static_cast<uint8_t>(data_[pos_++]);
}

uint16_t BinaryReader::u16() {
  need(2);
  uint16_t v = static_cast<uint16_t>(static_cast<uint8_t>(data_[pos_]) |
                                     (static_cast<uint8_t>(data_[pos_ + 1]) << 8));
  pos_ += 2;
  return v;
}

uint32_t BinaryReader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(data_[pos_ + i]);
  pos_ += 4;
  return v;
}

uint64_t BinaryReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(data_[pos_ + i]);
  pos_ += 8;
  return v;
}

float BinaryReader::f32() {
  uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

double BinaryReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string BinaryReader::bytes(size_t n) {
  need(n);
  std::string out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string BinaryReader::str16() {
  uint16_t n = u16();
  return bytes(n);
}

void BinaryReader::expect_magic(std::string_view magic) {
  size_t at = pos_;
  std::string got = bytes(magic.size());
  if (got != magic) {
    throw FormatError("bad magic at byte offset " + std::to_string(at) + ": expected \"" +
                      std::string(magic) + "\"");
  }
}

void BinaryReader::require_end() const {
  if (!at_end()) {
    throw FormatError("trailing data at byte offset " + std::to_string(pos_));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure: " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace vmb
