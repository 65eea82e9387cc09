// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/io.hpp"

#include <cstring>
#include <fstream>

#include "affectfuse/error.hpp"

namespace affectfuse::io {

void ByteWriter::u8(uint8_t v) { buf_.push_back(v); }

void ByteWriter::u16(uint16_t v) {
  buf_.push_back(static_cast<uint8_t>(v & 0xff));
  buf_.push_back(static_cast<uint8_t>(v >> 8));
}

void ByteWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  u64(bits);
}

void ByteWriter::magic() { bytes(kMagic, 4); }

void ByteWriter::str32(const std::string& s) {
  u32(static_cast<uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::tensor(const Tensor& t) {
  u8(static_cast<uint8_t>(t.ndim()));
  for (int d : t.shape) u32(static_cast<uint32_t>(d));
  for (double v : t.data) f64(v);
}

void ByteWriter::bytes(const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::to_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!os) throw FormatError("short write to " + path);
}

ByteReader ByteReader::from_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return ByteReader(std::move(data));
}

void ByteReader::require(size_t n) const {
  if (off_ + n > data_.size())
    throw FormatError("file truncated at byte " + std::to_string(off_) + " (need " +
                      std::to_string(n) + " more, have " + std::to_string(data_.size() - off_) +
                      ")");
}

uint8_t ByteReader::u8() {
  require(1);
  return data_[off_++];
}

uint16_t ByteReader::u16() {
  require(2);
  uint16_t v = static_cast<uint16_t>(data_[off_] | (data_[off_ + 1] << 8));
  off_ += 2;
  return v;
}

uint32_t ByteReader::u32() {
  require(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[off_ + static_cast<size_t>(i)]) << (8 * i);
  off_ += 4;
  return v;
}

uint64_t ByteReader::u64() {
  require(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[off_ + static_cast<size_t>(i)]) << (8 * i);
  off_ += 8;
  return v;
}

double ByteReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void ByteReader::expect_magic() {
  size_t at = off_;
  require(4);
  if (std::memcmp(data_.data() + off_, kMagic, 4) != 0)
    throw FormatError("bad magic at byte " + std::to_string(at));
  off_ += 4;
}

std::string ByteReader::str32(uint32_t max_len) {
  size_t at = off_;
  uint32_t n = u32();
  if (n > max_len)
    throw FormatError("string length " + std::to_string(n) + " at byte " + std::to_string(at) +
                      " exceeds limit");
  require(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + off_), n);
  off_ += n;
  return s;
}

Tensor ByteReader::tensor() {
  size_t at = off_;
  uint8_t nd = u8();
  if (nd < 1 || nd > 3)
    throw FormatError("tensor with " + std::to_string(nd) + " axes at byte " + std::to_string(at));
  std::vector<int> shape;
  int64_t numel = 1;
  for (int i = 0; i < nd; ++i) {
    uint32_t d = u32();
    if (d == 0 || d > (1u << 24))
      throw FormatError("bad tensor axis " + std::to_string(d) + " at byte " + std::to_string(at));
    shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  std::vector<double> data(static_cast<size_t>(numel));
  for (auto& v : data) v = f64();
  return Tensor(std::move(shape), std::move(data));
}

void ByteReader::expect_end() const {
  if (off_ != data_.size())
    throw FormatError("trailing bytes after byte " + std::to_string(off_));
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw FormatError("short write to " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace affectfuse::io
