#include <cmath>

#include "data.hpp"
#include "defense.hpp"
#include "doctest.h"
#include "rng.hpp"
#include "util.hpp"

using namespace fedsab;

namespace {

std::pair<Architecture, ParamSet> constant_model(const std::vector<scalar_t>& bias) {
  Architecture arch;
  arch.in_channels = 1;
  arch.in_h = 8;
  arch.in_w = 8;
  arch.num_classes = static_cast<int>(bias.size());
  arch.layers = {{.kind = LayerKind::Flatten, .name = "flat"},
                 {.kind = LayerKind::Dense, .name = "fc", .out_dim = arch.num_classes}};
  ParamSet params;
  params.add("fc.w", Tensor({64, arch.num_classes}));
  params.add("fc.b", Tensor({arch.num_classes}, bias));
  return {arch, params};
}

}  // namespace

TEST_CASE("dp_noise: identity, reproducibility, law of large numbers") {
  ParamSet delta;
  delta.add("t", Tensor::full({8}, 0.5));

  DpConfig off;
  off.mean = 0.0;
  off.sigma = 0.0;
  ParamSet same = dp_noise(delta, off, 1);
  for (int i = 0; i < 8; ++i) CHECK(same.get("t")[i] == 0.5);

  DpConfig cfg;  // defaults: mean 1e-6, sigma 1e-3
  ParamSet n1 = dp_noise(delta, cfg, 42);
  ParamSet n2 = dp_noise(delta, cfg, 42);
  ParamSet n3 = dp_noise(delta, cfg, 43);
  CHECK(n1.conformant_with(delta));
  bool all_same = true, any_diff_seed = false;
  for (int i = 0; i < 8; ++i) {
    all_same = all_same && n1.get("t")[i] == n2.get("t")[i];
    any_diff_seed = any_diff_seed || n1.get("t")[i] != n3.get("t")[i];
  }
  CHECK(all_same);
  CHECK(any_diff_seed);

  // 1e6 draws: empirical mean within mean +- 3 sigma/1000, std within 1%
  const int n = 1000000;
  ParamSet big;
  big.add("t", Tensor({n}));
  ParamSet noisy = dp_noise(big, cfg, 77);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += noisy.get("t")[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = noisy.get("t")[i] - mean;
    var += d * d;
  }
  const double stdev = std::sqrt(var / (n - 1));
  CHECK(std::abs(mean - cfg.mean) <= 3.0 * cfg.sigma / 1000.0);
  CHECK(std::abs(stdev - cfg.sigma) <= 0.01 * cfg.sigma);
}

TEST_CASE("strip_score: closed-form stubs and order invariance") {
  Dataset benign = synth_dataset(95, 150, 10, {1, 8, 8});
  StripConfig cfg;
  cfg.perturbations = 50;
  std::vector<int> pool;
  for (int i = 0; i < 150; ++i) pool.push_back(i);

  auto [uarch, uparams] = constant_model(std::vector<scalar_t>(10, 0.0));
  const double uniform_score =
      strip_score(uarch, uparams, benign.examples[0].pixels, benign, pool, cfg, 5);
  CHECK(uniform_score == doctest::Approx(std::log2(10.0)).epsilon(1e-9));

  std::vector<scalar_t> onehot(10, -30.0);
  onehot[3] = 30.0;
  auto [harch, hparams] = constant_model(onehot);
  const double sharp_score =
      strip_score(harch, hparams, benign.examples[0].pixels, benign, pool, cfg, 5);
  CHECK(sharp_score == doctest::Approx(0.0).epsilon(1e-9));

  // permuting the perturbation set does not change the score
  std::vector<int> shuffled = pool;
  Rng rng(96);
  rng.shuffle(shuffled);
  auto [rarch, rparams] = constant_model({0.3, 0.1, 0.7, 0.2, 0.6, 0.5, 0.4, 0.1, 0.2, 0.3});
  const double s1 = strip_score(rarch, rparams, benign.examples[1].pixels, benign, pool, cfg, 9);
  const double s2 =
      strip_score(rarch, rparams, benign.examples[1].pixels, benign, shuffled, cfg, 9);
  CHECK(s1 == s2);
  CHECK(s1 >= 0.0);
  CHECK(s1 <= std::log2(10.0));

  std::vector<int> tiny = {1, 2, 3};
  CHECK_THROWS_AS(
      static_cast<void>(strip_score(rarch, rparams, benign.examples[0].pixels, benign, tiny, cfg, 1)),
      Error);
}

TEST_CASE("strip_histogram: counts, degenerate cohort, replay") {
  Dataset benign = synth_dataset(97, 200, 10, {1, 8, 8});
  Dataset cohort;
  cohort.name = "c";
  cohort.num_classes = 10;
  for (int i = 0; i < 40; ++i) cohort.examples.push_back(benign.examples[static_cast<size_t>(i)]);
  std::vector<int> pool;
  for (int i = 40; i < 200; ++i) pool.push_back(i);

  StripConfig cfg;
  cfg.perturbations = 60;
  cfg.bins = 10;
  auto [uarch, uparams] = constant_model(std::vector<scalar_t>(10, 0.0));
  Histogram h = strip_histogram(uarch, uparams, cohort, benign, pool, cfg, 3);
  int64_t total = 0;
  int nonzero_bins = 0;
  for (int64_t c : h.counts) {
    total += c;
    nonzero_bins += c > 0 ? 1 : 0;
  }
  CHECK(total == 40);
  CHECK(nonzero_bins == 1);  // all scores identical
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() == doctest::Approx(std::log2(10.0)));

  Histogram h2 = strip_histogram(uarch, uparams, cohort, benign, pool, cfg, 3);
  CHECK(h.counts == h2.counts);
  CHECK(histogram_intersection(h, h2) == doctest::Approx(1.0));
}

TEST_CASE("gradcam: zero model, geometry, scale invariance") {
  Architecture arch = make_small_cnn(1, 16, 16, 4);
  Rng rng(98);
  ParamSet params = init_params(arch, rng);
  Tensor img({1, 16, 16});
  for (int64_t i = 0; i < img.size(); ++i) img[i] = rng.next_double();

  ParamSet zeros = params.clone_zeroed();
  Tensor flat = gradcam(arch, zeros, img, 0);
  CHECK(flat.shape() == std::vector<int>{16, 16});
  for (int64_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == 0.0);

  Tensor heat = gradcam(arch, params, img, 2);
  CHECK(heat.shape() == std::vector<int>{16, 16});
  for (int64_t i = 0; i < heat.size(); ++i) {
    CHECK(heat[i] >= 0.0);
    CHECK(heat[i] <= 1.0);
  }

  // doubling the final dense weights only rescales the tapped logit; the
  // normalized map is unchanged
  ParamSet scaled = params;
  Tensor& w = scaled.get("fc.w");
  for (int64_t i = 0; i < w.size(); ++i) w[i] *= 2.0;
  Tensor& b = scaled.get("fc.b");
  for (int64_t i = 0; i < b.size(); ++i) b[i] *= 2.0;
  Tensor heat2 = gradcam(arch, scaled, img, 2);
  for (int64_t i = 0; i < heat.size(); ++i) CHECK(std::abs(heat[i] - heat2[i]) <= 1e-5);

  // a conv-free model cannot be tapped
  Architecture dense_only;
  dense_only.in_channels = 1;
  dense_only.in_h = 4;
  dense_only.in_w = 4;
  dense_only.num_classes = 2;
  dense_only.layers = {{.kind = LayerKind::Flatten, .name = "flat"},
                       {.kind = LayerKind::Dense, .name = "fc", .out_dim = 2}};
  Rng rng2(99);
  ParamSet dparams = init_params(dense_only, rng2);
  Tensor small({1, 4, 4});
  CHECK_THROWS_AS(static_cast<void>(gradcam(dense_only, dparams, small, 0)), Error);
}

TEST_CASE("prediction entropy bounds") {
  Rng rng(100);
  for (int t = 0; t < 20; ++t) {
    Tensor logits({1, 10});
    for (int i = 0; i < 10; ++i) logits[i] = rng.uniform(-5, 5);
    const double h = prediction_entropy_bits(logits, 0);
    CHECK(h >= 0.0);
    CHECK(h <= std::log2(10.0) + 1e-12);
  }
}
