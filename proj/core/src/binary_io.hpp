#pragma once

// Little-endian encoding helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lano/error.hpp"

namespace lano::detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { uint(v); }
  void u16(std::uint16_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* p, std::size_t n, std::string what)
      : p_(p), n_(n), what_(std::move(what)) {}

  bool done() const { return pos_ == n_; }
  std::size_t remaining() const { return n_ - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t k) const {
    if (n_ - pos_ < k) {
      throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                        std::to_string(k) + ", have " + std::to_string(n_ - pos_) + ")");
    }
  }
  void bytes(void* out, std::size_t k) {
    need(k);
    std::memcpy(out, p_ + pos_, k);
    pos_ += k;
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return uint<std::uint8_t>(); }
  std::uint16_t u16() { return uint<std::uint16_t>(); }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const auto len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  void expect_magic(const char (&magic)[5]) {
    need(4);
    if (std::memcmp(p_ + pos_, magic, 4) != 0) {
      throw FormatError(what_ + ": bad magic at byte " + std::to_string(pos_) + ", expected '" +
                        magic + "'");
    }
    pos_ += 4;
  }
  // Reads the u32 version field; a byte-swapped value means the writer used
  // the other byte order.
  void expect_version(std::uint32_t expected) {
    const auto v = u32();
    if (v == expected) return;
    const auto swapped = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    if (swapped == expected) {
      throw FormatError(what_ + ": endianness marker mismatch (big-endian file)");
    }
    throw FormatError(what_ + ": unsupported version " + std::to_string(v));
  }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes);

}  // namespace lano::detail
