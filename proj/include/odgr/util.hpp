#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace odgr {

// Deterministic seed derivation. Children of a master seed are independent
// streams keyed by a path of integers, so parallel consumers can be reseeded
// without coordinating.
uint64_t splitmix64(uint64_t x);
uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> path);
// Path segments may also be role tags; each is hashed into the chain.
uint64_t derive_seed(uint64_t seed, std::initializer_list<std::string_view> path);

// Thin RNG wrapper. Bounded ints and normals are generated from raw engine
// output rather than std distributions, so sequences are pinned for a given
// seed independent of the standard library in use.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  uint64_t next() { return gen_(); }

  // uniform over [0, n)
  int uniform_int(int n);
  double uniform01();
  // uniform over [lo, hi]
  double uniform_real(double lo, double hi);
  double normal(double mean, double sigma);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

// "%g"-style minimal formatting: 1.0 -> "1", 0.3 -> "0.3"
std::string fmt_g(double v);
// fixed decimals: fmt_fixed(12.171, 2) -> "12.17"
std::string fmt_fixed(double v, int decimals);
// Python-float-repr of a value rounded to two decimals: 0.9 -> "0.9",
// 1.0 -> "1.0", 1.0/3 -> "0.33". Always keeps at least one decimal digit.
std::string fmt_accuracy(double v);

// joins values as "(a, b, c)"; integral values are printed without decimals
std::string fmt_tuple(const std::vector<double>& v);

}  // namespace odgr
