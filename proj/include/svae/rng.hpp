#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace svae {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic keyed RNG. A stream is opened from (seed, key...) through a
// splitmix64 chain, so per-(epoch, step, image) streams can be created
// independently without consuming each other's draws. Uniform and normal
// deviates are generated explicitly (53-bit mantissa uniforms, Box-Muller)
// rather than via std distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t s = seed;
    std::uint64_t mixed = splitmix64(s);
    for (std::uint64_t k : keys) {
      s ^= k * 0x2545f4914f6cdd1dULL;
      mixed = splitmix64(s);
    }
    return Rng(mixed);
  }

  std::uint64_t u64() { return gen_(); }

  // Uniform in [0, 1).
  double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (second deviate cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - u01();  // (0, 1]
    double u2 = u01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags used to key independent RNG streams.
namespace rng_tag {
constexpr std::uint64_t kInit = 0x11;       // weight initialization
constexpr std::uint64_t kShuffle = 0x22;    // epoch permutations
constexpr std::uint64_t kNoise = 0x33;      // reparameterization draws
constexpr std::uint64_t kAugment = 0x44;    // rotation augmentation
constexpr std::uint64_t kTransform = 0x55;  // dataset transforms
constexpr std::uint64_t kHinge = 0x66;      // hinge dataset generation
constexpr std::uint64_t kEval = 0x77;       // evaluation sampling
constexpr std::uint64_t kDigits = 0x88;     // synthetic digit generation
}  // namespace rng_tag

}  // namespace svae
