#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace spdyn {

// Seeded stream generator. Rng(seed, stream) yields an independent, reproducible
// sequence for every (seed, stream) pair, so parallel work keyed by stream index
// is bit-identical for any thread count. Distribution transforms are implemented
// here rather than taken from <random>, whose algorithms vary across libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                       // [0, 1)
  double normal();                        // standard normal
  double normal(double mean, double sd) { return mean + sd * normal(); }
  std::uint64_t below(std::uint64_t n);   // uniform integer in [0, n)

  template <class T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spdyn
