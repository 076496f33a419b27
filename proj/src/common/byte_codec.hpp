#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include "gdaip/common.hpp"

namespace gdaip::detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::string_view magic) : out_(magic) {}

  template <class U>
  void put(U value) {
    for (std::size_t b = 0; b < sizeof(U); ++b) out_.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void reserve(std::size_t extra) { out_.reserve(out_.size() + extra); }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

/// Little-endian reader whose errors name the source and byte offset.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string_view source) : bytes_(bytes), source_(source) {}

  void magic(std::string_view expected) {
    need(expected.size(), "magic");
    if (bytes_.substr(0, expected.size()) != expected)
      fail("bad magic (expected '" + std::string(expected) + "')");
    pos_ += expected.size();
  }

  template <class U>
  U get(std::string_view what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += sizeof(U);
    return value;
  }
  float get_f32(std::string_view what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }
  double get_f64(std::string_view what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }

  void finish() {
    if (pos_ != bytes_.size()) fail(std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }

  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw InputError(std::string(source_) + ": " + msg + " at offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, std::string_view what) {
    if (bytes_.size() - pos_ < n) fail("truncated " + std::string(what));
  }

  std::string_view bytes_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

}  // namespace gdaip::detail
