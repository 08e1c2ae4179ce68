#pragma once

// Little-endian byte encoding shared by the checkpoint and feature formats.

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include "emtune/error.hpp"

namespace emtune::detail {

class ByteWriter {
public:
  void bytes(std::string_view s) { out_.append(s); }

  template <typename T>
  void le(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
    }
  }

  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  std::string take() { return std::move(out_); }

private:
  std::string out_;
};

class ByteReader {
public:
  ByteReader(std::string_view data, const char* what) : data_(data), what_(what) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::string_view bytes(std::size_t n) {
    require(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T le() {
    require(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

private:
  void require(std::size_t n) const {
    if (remaining() < n) {
      throw ParseError(std::string(what_) + ": truncated, needed " + std::to_string(n) +
                           " more byte(s) but only " + std::to_string(remaining()) + " remain",
                       pos_);
    }
  }

  std::string_view data_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path, const char* what);
void write_file_bytes(const std::string& path, std::string_view bytes, const char* what);

}  // namespace emtune::detail
