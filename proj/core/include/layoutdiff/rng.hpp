#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace layoutdiff {

/// Seeded random stream. The full state (engine plus the normal
/// distribution's cached variate) round-trips through save()/restore(),
/// which is what makes training resumable bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  /// Inclusive on both ends.
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

  std::string save() const {
    std::ostringstream os;
    os << engine_ << ' ' << normal_;
    return os.str();
  }
  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_ >> normal_;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace layoutdiff
