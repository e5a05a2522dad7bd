#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace raycal {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed; used to give every pixel/ray its own
// deterministic sample sequence.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0x2545f4914f6cdd1dULL * (stream + 1));
  return splitmix64(s);
}

// mt19937_64 with bit-exact uniform/gaussian draws (the standard library
// distributions are implementation-defined, which would break reproducible
// logs across toolchains).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double uniform_pos() {  // (0, 1]
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }
  std::uint64_t next_u64() { return engine_(); }
  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
  }
  double gauss() {  // Box-Muller, two draws per sample
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  friend std::ostream& operator<<(std::ostream& os, const Rng& rng) {
    return os << rng.engine_;
  }
  friend std::istream& operator>>(std::istream& is, Rng& rng) {
    return is >> rng.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace raycal
