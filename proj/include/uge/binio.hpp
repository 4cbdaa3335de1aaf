#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

namespace uge {

// Little-endian binary stream writers/readers for the cache and checkpoint
// formats. The reader tracks its offset so truncation errors can say where
// the data ran out.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u8(uint8_t v) { bytes(&v, sizeof v); }
  void u32(uint32_t v) { bytes(&v, sizeof v); }
  void u64(uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void f64s(const double* p, size_t n) { bytes(p, n * sizeof(double)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void check() const {
    if (!out_) throw std::runtime_error("write failed for '" + path_ + "'");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open '" + path + "' for reading");
  }
  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<size_t>(in_.gcount()) != n)
      throw std::runtime_error("'" + path_ + "' is truncated at byte offset " +
                               std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }
  uint8_t u8() { uint8_t v; bytes(&v, sizeof v); return v; }
  uint32_t u32() { uint32_t v; bytes(&v, sizeof v); return v; }
  uint64_t u64() { uint64_t v; bytes(&v, sizeof v); return v; }
  double f64() { double v; bytes(&v, sizeof v); return v; }
  void f64s(double* p, size_t n) { bytes(p, n * sizeof(double)); }
  std::string str() {
    const uint64_t n = u64();
    if (n > (1ULL << 32))
      throw std::runtime_error("'" + path_ + "' has an implausible string length at offset " +
                               std::to_string(offset_));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  uint64_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::string path_;
  uint64_t offset_ = 0;
};

}  // namespace uge
