#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "odgr/core.hpp"

namespace odgr::wire {

// Little-endian binary record helpers shared by the on-disk cache formats.
// Readers surface any out-of-bounds access as ChecksumError, so damaged or
// truncated files fail loudly instead of yielding garbage records.

struct Writer {
  std::string buf;

  void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void i64(int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void dims(const DiscreteSpace& d) {
    u32(static_cast<uint32_t>(d.dims.size()));
    for (int v : d.dims) u32(static_cast<uint32_t>(v));
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
};

struct Reader {
  const char* p;
  const char* end;
  const char* label = "record";  // names the file kind in error messages

  void need(size_t n) const {
    if (static_cast<size_t>(end - p) < n) throw ChecksumError(std::string(label) + " truncated");
  }
  void raw(void* out, size_t n) {
    need(n);
    std::memcpy(out, p, n);
    p += n;
  }
  uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
  uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
  uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
  int64_t i64() { int64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s(p, n);
    p += n;
    return s;
  }
  DiscreteSpace dims() {
    DiscreteSpace d;
    uint32_t n = u32();
    d.dims.resize(n);
    for (auto& v : d.dims) v = static_cast<int>(u32());
    return d;
  }
  std::vector<double> doubles() {
    uint64_t n = u64();
    need(n * sizeof(double));
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
};

}  // namespace odgr::wire
