#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace dre {

// Streams must replay bit-identically across platforms and standard
// libraries, so both the generator (xoshiro256++) and the normal transform
// (Box-Muller) are fixed algorithms rather than std:: distributions.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t z) {
  std::uint64_t s = z;
  return splitmix64_next(s);
}

class rng_stream {
 public:
  rng_stream() : rng_stream(0) {}

  explicit rng_stream(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64_next(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform01_open_left() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal, Box-Muller, pairwise consumption of uniforms.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01_open_left();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  void fill_normal(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
  }

  // In-place Fisher-Yates, top-down, consuming one index draw per element.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4] = {0, 0, 0, 0};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream identity within one experiment: which data split and which
// distribution (or auxiliary purpose) the draw feeds.
enum class split_id : std::uint64_t { train = 0, val = 1, test = 2, aux = 3 };

enum class source_id : std::uint64_t {
  p = 0,
  q = 1,
  directions = 2,
  init = 3,
  shuffle = 4,
  pairs = 5,
  mc = 6,
  query = 7,
};

// Derives an independent stream for a (trial, split, source) tuple. Each tag
// passes through the splitmix64 finalizer so neighbouring tuples land far
// apart in seed space.
inline rng_stream derive_stream(std::uint64_t master_seed, std::uint64_t trial,
                                split_id split, source_id source) {
  std::uint64_t h = mix64(master_seed ^ 0x5bf03635aca2fd4cULL);
  h = mix64(h ^ mix64(trial + 1));
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(split) + 0x11));
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(source) + 0x101));
  return rng_stream(h);
}

}  // namespace dre
