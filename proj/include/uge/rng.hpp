#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace uge {

// Counter-based random generator: output i is the SplitMix64 finalizer applied
// to key + i * golden-gamma. No hidden state beyond (key, counter), so the
// stream is reproducible across platforms and can be split into independent
// substreams by deriving a new key. std::mt19937 + std::normal_distribution is
// deliberately avoided: the distribution's output sequence is
// implementation-defined and would make stored features non-portable.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed, uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x1F123BB5159A55E5ULL))) {}

  // Independent substream labelled by an integer.
  CounterRng split(uint64_t label) const { return CounterRng(key_, mix(label)); }
  // Independent substream labelled by a string (FNV-1a of the bytes).
  CounterRng split(const std::string& label) const { return CounterRng(key_, fnv1a(label)); }

  uint64_t next_u64() { return at(counter_++); }

  // Uniform in [0, 1).
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64 in every
    // use (shuffles, sizes), so the bias is unobservable.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller. Uses two counter slots per value so the
  // mapping counter -> output stays fixed.
  double next_gaussian() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;          // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

 private:
  uint64_t at(uint64_t counter) const { return mix(key_ + counter * 0x9E3779B97F4A7C15ULL); }

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace uge
