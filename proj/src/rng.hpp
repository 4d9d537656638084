#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedsab {

// splitmix64 finalizer; used both as a bit mixer and to derive stream seeds.
uint64_t mix64(uint64_t x);

// Purpose tags keep per-round RNG streams disjoint. Streams are derived as
// mix-chains over (experiment seed, round, client, purpose) so client work
// can run in any order without changing results.
enum class Stream : uint64_t {
  ClientSelect = 1,
  ParamInit = 2,
  LocalShuffle = 3,
  SparseMask = 4,
  DpNoise = 5,
  StegoTrain = 6,
  Poison = 7,
  Strip = 8,
  Synth = 9,
  Partition = 10,
  SecretBits = 11,
};

uint64_t stream_seed(uint64_t experiment_seed, uint64_t round, uint64_t client, Stream purpose);

// Deterministic RNG. The engine is std::mt19937_64 (sequence fixed by the
// standard); all distributions are hand-rolled here because the std ones are
// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix64(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return static_cast<float>(next_double()); }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // unbiased integer in [0, n)
  uint64_t below(uint64_t n);

  // standard normal via Box-Muller (second value cached)
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Gamma(alpha, 1) via Marsaglia-Tsang, with the boost for alpha < 1
  double gamma(double alpha);

  std::vector<double> dirichlet(double alpha, int k);

  // Fisher-Yates
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in draw order
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedsab
