#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pintda {

/// Seeded source of uniform and standard-normal variates.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniforms are formed from the top 53 bits of each draw and normals
/// use the Marsaglia polar method, so neither depends on the library's
/// distribution classes (whose algorithms are implementation-defined).
/// Identical seeds therefore replay identical streams across toolchains, up to
/// the rounding of std::log.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  /// Independent stream for parallel task `index`.
  [[nodiscard]] SeededRng derive(std::uint64_t index) const { return SeededRng(seed_ + index); }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace pintda
