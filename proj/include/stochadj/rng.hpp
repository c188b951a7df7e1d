#pragma once

#include <cstdint>
#include <random>

namespace stochadj {

// Mixes a base seed with a stream index; used for per-trajectory and
// per-replication seeds so results do not depend on thread scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (0, 1); 53 random bits, offset by half a ulp.
  double uniform();

  // Standard normal by inverting the CDF of one uniform draw.
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace stochadj
