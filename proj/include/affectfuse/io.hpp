// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "affectfuse/tensor.hpp"

namespace affectfuse::io {

// Binary container primitives. Everything is little-endian regardless of
// host order; floats travel as their IEEE-754 bit patterns, so round trips
// are bit-exact. The container format is described in docs/formats.md.

constexpr char kMagic[4] = {'A', 'F', 'U', 'S'};
constexpr uint16_t kVersion = 1;
constexpr uint16_t kKindDataset = 1;
constexpr uint16_t kKindCheckpoint = 2;

class ByteWriter {
 public:
  void u8(uint8_t v);
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f64(double v);
  void magic();
  void str32(const std::string& s);     // u32 length + bytes
  void tensor(const Tensor& t);         // u8 ndim, u32 dims, f64 data
  void bytes(const void* p, size_t n);

  const std::vector<uint8_t>& buffer() const { return buf_; }
  void to_file(const std::string& path) const;  // FormatError on I/O failure

 private:
  std::vector<uint8_t> buf_;
};

// Tracks the byte offset so every failure reports where the file broke.
class ByteReader {
 public:
  explicit ByteReader(std::vector<uint8_t> data) : data_(std::move(data)) {}
  static ByteReader from_file(const std::string& path);

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  double f64();
  void expect_magic();
  std::string str32(uint32_t max_len = 1u << 20);
  Tensor tensor();

  size_t offset() const { return off_; }
  bool at_end() const { return off_ == data_.size(); }
  // FormatError unless the whole buffer was consumed.
  void expect_end() const;

 private:
  void require(size_t n) const;
  std::vector<uint8_t> data_;
  size_t off_ = 0;
};

// Writes text to path, failing loudly rather than partially.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace affectfuse::io
