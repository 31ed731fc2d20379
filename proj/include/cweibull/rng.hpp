#pragma once

#include <cstdint>
#include <random>

namespace cweibull {

// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the `index`-th child stream of `seed`. Pure function, so replication
// batches can be generated in any order or in parallel.
constexpr std::uint64_t split_seed(std::uint64_t seed,
                                   std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Explicit generator state. mt19937_64 output is fixed by the standard; the
// uniform and normal transforms below are written out by hand so draws are
// bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  // Uniform on the open interval (0, 1).
  double uniform() {
    const std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the Marsaglia polar method.
  double normal();

  // Exponential with the given rate.
  double exponential(double rate);

  // Child generator; does not advance this one.
  Rng split(std::uint64_t index) const { return Rng(split_seed(seed_, index)); }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cweibull
