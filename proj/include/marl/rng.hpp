#pragma once

#include <cstdint>

namespace marl {

// Counter-based deterministic generator (splitmix64). Each (seed, stream)
// pair yields an independent stream, so evaluation draws never perturb
// training draws.
class Rng {
 public:
  enum Stream : std::uint64_t {
    kEnv = 0x1,
    kExplore = 0x2,
    kSample = 0x3,
    kInit = 0x4,
    kEval = 0x5,
    kOracle = 0x6,
  };

  Rng() : state_(0) {}
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(std::uint64_t seed, std::uint64_t stream = 0) {
    state_ = mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  int uniform_int(int n) { return static_cast<int>(uniform() * static_cast<double>(n)); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t state() const { return state_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace marl
