#include "rng.hpp"

#include <cmath>

#include "util.hpp"

namespace fedsab {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t stream_seed(uint64_t experiment_seed, uint64_t round, uint64_t client, Stream purpose) {
  uint64_t h = mix64(experiment_seed);
  h = mix64(h ^ round);
  h = mix64(h ^ client);
  h = mix64(h ^ static_cast<uint64_t>(purpose));
  return h;
}

uint64_t Rng::below(uint64_t n) {
  check(n > 0, ErrorKind::Internal, "Rng::below requires n > 0");
  // rejection sampling on the top bits
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = next_double();
  } while (u1 <= 0.0);
  u2 = next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

double Rng::gamma(double alpha) {
  check(alpha > 0.0, ErrorKind::Internal, "gamma requires alpha > 0");
  if (alpha < 1.0) {
    double u;
    do {
      u = next_double();
    } while (u <= 0.0);
    return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = next_double();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(double alpha, int k) {
  std::vector<double> g(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    g[i] = gamma(alpha);
    sum += g[i];
  }
  if (sum <= 0.0) {
    // degenerate draw; fall back to uniform rather than dividing by zero
    for (auto& v : g) v = 1.0 / k;
    return g;
  }
  for (auto& v : g) v /= sum;
  return g;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  check(k <= n, ErrorKind::Internal, "sample_without_replacement: k > n");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::vector<int> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(below(static_cast<uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
    out.push_back(idx[i]);
  }
  return out;
}

}  // namespace fedsab
