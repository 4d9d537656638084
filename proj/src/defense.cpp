#include "defense.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"
#include "util.hpp"

namespace fedsab {

ParamSet dp_noise(const ParamSet& delta, const DpConfig& cfg, uint64_t seed_stream) {
  check(cfg.sigma >= 0.0, ErrorKind::Config, "dp_noise: sigma must be >= 0");
  ParamSet out;
  Rng rng(seed_stream);
  for (size_t i = 0; i < delta.size(); ++i) {
    Tensor t = delta.tensor_at(i);
    if (cfg.sigma > 0.0 || cfg.mean != 0.0)
      for (int64_t k = 0; k < t.size(); ++k) t[k] += rng.normal(cfg.mean, cfg.sigma);
    out.add(delta.name_at(i), std::move(t));
  }
  return out;
}

double prediction_entropy_bits(const Tensor& logits, int row) {
  const int K = logits.dim(1);
  const scalar_t* r = logits.data() + static_cast<int64_t>(row) * K;
  double mx = r[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, r[k]);
  double denom = 0.0;
  for (int k = 0; k < K; ++k) denom += std::exp(r[k] - mx);
  double h = 0.0;
  for (int k = 0; k < K; ++k) {
    const double p = std::exp(r[k] - mx) / denom;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

namespace {

std::vector<int> draw_perturbations(std::vector<int> indices, int n, uint64_t seed) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  check(static_cast<int>(indices.size()) >= n, ErrorKind::Input,
        "strip: perturbation set smaller than N");
  Rng rng(stream_seed(seed, 0, 0, Stream::Strip));
  const std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(indices.size()), n);
  std::vector<int> out;
  out.reserve(static_cast<size_t>(n));
  for (int p : picks) out.push_back(indices[static_cast<size_t>(p)]);
  return out;
}

double score_with_draw(const Architecture& arch, const ParamSet& params, const Tensor& input,
                       const Dataset& benign, const std::vector<int>& draw, double blend) {
  const int n = static_cast<int>(draw.size());
  Tensor batch({n, input.dim(0), input.dim(1), input.dim(2)});
  const int64_t stride = input.size();
  for (int i = 0; i < n; ++i) {
    const Tensor& p = benign.examples[static_cast<size_t>(draw[static_cast<size_t>(i)])].pixels;
    check(p.same_shape(input), ErrorKind::Input, "strip: image shape mismatch");
    for (int64_t k = 0; k < stride; ++k)
      batch[static_cast<int64_t>(i) * stride + k] =
          std::clamp(blend * input[k] + (1.0 - blend) * p[k], 0.0, 1.0);
  }
  const Tensor logits = forward_infer(arch, params, batch);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += prediction_entropy_bits(logits, i);
  return acc / n;
}

}  // namespace

double strip_score(const Architecture& arch, const ParamSet& params, const Tensor& input_chw,
                   const Dataset& benign, std::vector<int> perturbation_indices,
                   const StripConfig& cfg, uint64_t seed) {
  check(cfg.perturbations >= 1, ErrorKind::Config, "strip: N must be >= 1");
  check(cfg.blend > 0.0 && cfg.blend < 1.0, ErrorKind::Config, "strip: blend must lie in (0,1)");
  const std::vector<int> draw =
      draw_perturbations(std::move(perturbation_indices), cfg.perturbations, seed);
  return score_with_draw(arch, params, input_chw, benign, draw, cfg.blend);
}

Histogram strip_histogram(const Architecture& arch, const ParamSet& params, const Dataset& cohort,
                          const Dataset& benign, const std::vector<int>& perturbation_indices,
                          const StripConfig& cfg, uint64_t seed) {
  check(cfg.bins >= 2, ErrorKind::Input, "strip_histogram: bins must be >= 2");
  check(!cohort.empty(), ErrorKind::Input, "strip_histogram: empty cohort");
  const std::vector<int> draw =
      draw_perturbations(perturbation_indices, cfg.perturbations, seed);

  const double hi = std::log2(static_cast<double>(cohort.num_classes));
  Histogram h;
  h.edges.resize(static_cast<size_t>(cfg.bins) + 1);
  for (int i = 0; i <= cfg.bins; ++i)
    h.edges[static_cast<size_t>(i)] = hi * static_cast<double>(i) / cfg.bins;
  h.counts.assign(static_cast<size_t>(cfg.bins), 0);

  for (const auto& ex : cohort.examples) {
    const double s = score_with_draw(arch, params, ex.pixels, benign, draw, cfg.blend);
    int bin = static_cast<int>(std::floor(s / hi * cfg.bins));
    bin = std::clamp(bin, 0, cfg.bins - 1);
    ++h.counts[static_cast<size_t>(bin)];
  }
  return h;
}

double histogram_intersection(const Histogram& a, const Histogram& b) {
  check(a.counts.size() == b.counts.size(), ErrorKind::Input,
        "histogram_intersection: bin count mismatch");
  int64_t ta = 0, tb = 0;
  for (int64_t c : a.counts) ta += c;
  for (int64_t c : b.counts) tb += c;
  check(ta > 0 && tb > 0, ErrorKind::Input, "histogram_intersection: empty histogram");
  double inter = 0.0;
  for (size_t i = 0; i < a.counts.size(); ++i)
    inter += std::min(static_cast<double>(a.counts[i]) / ta, static_cast<double>(b.counts[i]) / tb);
  return inter;
}

Tensor gradcam(const Architecture& arch, const ParamSet& params, const Tensor& input_chw,
               int class_index, double* raw_min, double* raw_max) {
  check(input_chw.rank() == 3, ErrorKind::Input, "gradcam: image must be [C,H,W]");
  check(class_index >= 0 && class_index < arch.num_classes, ErrorKind::Input,
        "gradcam: class index out of range");

  Tape tape;
  ForwardResult fwd =
      forward_pass(tape, arch, params, stack_batch({&input_chw}), /*params_need_grad=*/true);
  check(!fwd.conv_outputs.empty(), ErrorKind::Config, "gradcam: model has no conv layer to tap");
  Node* tap = fwd.conv_outputs.back();

  Tensor seed(fwd.logits->value.shape());
  seed[class_index] = 1.0;
  tape.backward(fwd.logits, &seed);
  check(tap->has_grad, ErrorKind::Internal, "gradcam: tapped activations received no gradient");

  const int K = tap->value.dim(1), h = tap->value.dim(2), w = tap->value.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;

  // channel weights: spatial mean of d(logit_class)/dA_k
  std::vector<double> alpha(static_cast<size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) acc += tap->grad[static_cast<int64_t>(k) * plane + i];
    alpha[static_cast<size_t>(k)] = acc / static_cast<double>(plane);
  }

  std::vector<double> map(static_cast<size_t>(plane), 0.0);
  for (int k = 0; k < K; ++k)
    for (int64_t i = 0; i < plane; ++i)
      map[static_cast<size_t>(i)] += alpha[static_cast<size_t>(k)] * tap->value[static_cast<int64_t>(k) * plane + i];
  for (auto& v : map) v = std::max(v, 0.0);

  // nearest upsample to the input size, then min-max normalize
  const int H = input_chw.dim(1), W = input_chw.dim(2);
  Tensor out({H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const int si = std::min(static_cast<int>(static_cast<int64_t>(i) * h / H), h - 1);
      const int sj = std::min(static_cast<int>(static_cast<int64_t>(j) * w / W), w - 1);
      out[static_cast<int64_t>(i) * W + j] = map[static_cast<size_t>(si) * w + sj];
    }
  double mn = out[0], mx = out[0];
  for (int64_t i = 0; i < out.size(); ++i) {
    mn = std::min(mn, out[i]);
    mx = std::max(mx, out[i]);
  }
  if (raw_min) *raw_min = mn;
  if (raw_max) *raw_max = mx;
  if (mx > mn) {
    for (int64_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mn) / (mx - mn);
  } else {
    out.fill(0.0);
  }
  return out;
}

}  // namespace fedsab
