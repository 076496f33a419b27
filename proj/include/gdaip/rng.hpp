#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace gdaip {

/// Derives an independent stream seed from a root seed, a stream name and optional indices
/// (e.g. subject, session). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::initializer_list<std::uint64_t> ids = {});

/// Seeded generator with portable sampling routines. The std distributions are
/// implementation-defined, so sampling is done here on top of the raw engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();   // N(0, 1), Box-Muller without caching
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gdaip
