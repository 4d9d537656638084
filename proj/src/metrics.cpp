#include "metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "util.hpp"

namespace fedsab {

std::vector<int> predict_all(const Architecture& arch, const ParamSet& params, const Dataset& ds,
                             int batch_size) {
  check(!ds.empty(), ErrorKind::Input, "predict_all: empty dataset");
  std::vector<int> preds(ds.size());
  const int n = static_cast<int>(ds.size());
  for (int start = 0; start < n; start += batch_size) {
    const int bs = std::min(batch_size, n - start);
    std::vector<const Tensor*> imgs;
    imgs.reserve(static_cast<size_t>(bs));
    for (int k = 0; k < bs; ++k) imgs.push_back(&ds.examples[static_cast<size_t>(start + k)].pixels);
    const Tensor logits = forward_infer(arch, params, stack_batch(imgs));
    const int K = logits.dim(1);
    for (int k = 0; k < bs; ++k) {
      const scalar_t* row = logits.data() + static_cast<int64_t>(k) * K;
      int best = 0;
      for (int c = 1; c < K; ++c)
        if (row[c] > row[best]) best = c;
      preds[static_cast<size_t>(start + k)] = best;
    }
  }
  return preds;
}

double attack_success_rate(const Architecture& arch, const ParamSet& params,
                           const Dataset& poisoned_test, int target_class) {
  check(!poisoned_test.empty(), ErrorKind::Input, "attack_success_rate: empty poisoned test set");
  const std::vector<int> preds = predict_all(arch, params, poisoned_test);
  int64_t hits = 0;
  for (int p : preds) hits += p == target_class ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double benign_accuracy(const Architecture& arch, const ParamSet& params, const Dataset& test) {
  check(!test.empty(), ErrorKind::Input, "benign_accuracy: empty test set");
  const std::vector<int> preds = predict_all(arch, params, test);
  int64_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    hits += preds[i] == test.examples[i].label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double test_accuracy_loss(const std::vector<double>& ba_clean,
                          const std::vector<double>& ba_attacked, int round) {
  check(round >= 0 && round < static_cast<int>(ba_clean.size()) &&
            round < static_cast<int>(ba_attacked.size()),
        ErrorKind::Input, "test_accuracy_loss: round out of range");
  return ba_clean[static_cast<size_t>(round)] - ba_attacked[static_cast<size_t>(round)];
}

namespace {

constexpr int kResize = 32;
constexpr int kBlock = 8;

// corner-aligned bilinear sample of a [H,W] plane
double bilinear(const std::vector<double>& plane, int H, int W, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, H - 1);
  const int x1 = std::min(x0 + 1, W - 1);
  const double fy = y - y0, fx = x - x0;
  const double a = plane[static_cast<size_t>(y0) * W + x0];
  const double b = plane[static_cast<size_t>(y0) * W + x1];
  const double c = plane[static_cast<size_t>(y1) * W + x0];
  const double d = plane[static_cast<size_t>(y1) * W + x1];
  return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx;
}

}  // namespace

uint64_t phash64(const Tensor& image_chw) {
  check(image_chw.rank() == 3, ErrorKind::Input, "phash64: image must be [C,H,W]");
  const int C = image_chw.dim(0), H = image_chw.dim(1), W = image_chw.dim(2);

  // grayscale by channel mean
  std::vector<double> gray(static_cast<size_t>(H) * W, 0.0);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H * W; ++i) gray[static_cast<size_t>(i)] += image_chw[static_cast<int64_t>(c) * H * W + i];
  for (auto& v : gray) v /= C;

  // bilinear resize to 32x32, corners aligned
  std::vector<double> small(kResize * kResize);
  for (int i = 0; i < kResize; ++i)
    for (int j = 0; j < kResize; ++j) {
      const double y = H > 1 ? static_cast<double>(i) * (H - 1) / (kResize - 1) : 0.0;
      const double x = W > 1 ? static_cast<double>(j) * (W - 1) / (kResize - 1) : 0.0;
      small[static_cast<size_t>(i) * kResize + j] = bilinear(gray, H, W, y, x);
    }

  // orthonormal 2-D DCT-II restricted to the top-left 8x8 block
  static const auto dct_rows = [] {
    std::vector<double> m(kBlock * kResize);
    for (int k = 0; k < kBlock; ++k)
      for (int i = 0; i < kResize; ++i) {
        const double c0 = k == 0 ? std::sqrt(1.0 / kResize) : std::sqrt(2.0 / kResize);
        m[static_cast<size_t>(k) * kResize + i] =
            c0 * std::cos(M_PI * (2.0 * i + 1.0) * k / (2.0 * kResize));
      }
    return m;
  }();

  double coeffs[kBlock * kBlock];
  double tmp[kBlock * kResize];  // rows transformed, columns pending
  for (int k = 0; k < kBlock; ++k)
    for (int j = 0; j < kResize; ++j) {
      double acc = 0.0;
      for (int i = 0; i < kResize; ++i)
        acc += dct_rows[static_cast<size_t>(k) * kResize + i] * small[static_cast<size_t>(i) * kResize + j];
      tmp[static_cast<size_t>(k) * kResize + j] = acc;
    }
  for (int k = 0; k < kBlock; ++k)
    for (int l = 0; l < kBlock; ++l) {
      double acc = 0.0;
      for (int j = 0; j < kResize; ++j)
        acc += tmp[static_cast<size_t>(k) * kResize + j] * dct_rows[static_cast<size_t>(l) * kResize + j];
      coeffs[k * kBlock + l] = acc;
    }

  // snap numerical dust to exact zero so analytically-zero coefficients (a
  // constant image has only its DC term) compare as zero below
  double peak = 0.0;
  for (double c : coeffs) peak = std::max(peak, std::abs(c));
  for (double& c : coeffs)
    if (std::abs(c) <= 1e-12 * peak) c = 0.0;

  double sorted[kBlock * kBlock];
  std::copy(std::begin(coeffs), std::end(coeffs), std::begin(sorted));
  std::sort(std::begin(sorted), std::end(sorted));
  const double median = 0.5 * (sorted[31] + sorted[32]);

  uint64_t hash = 0;
  for (int i = 0; i < 64; ++i)
    if (coeffs[i] > median) hash |= 1ULL << (63 - i);
  return hash;
}

int phash_distance(uint64_t a, uint64_t b) { return std::popcount(a ^ b); }

}  // namespace fedsab
