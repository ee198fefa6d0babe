#pragma once

#include <array>
#include <cstdint>

namespace puca {

// xoshiro256** seeded through splitmix64. Gaussian samples use the Box-Muller
// transform with both outputs consumed in order, so a given seed produces the
// same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  // Independent child stream; does not advance this generator.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace puca
