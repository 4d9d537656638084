#pragma once

#include <cstdint>
#include <vector>

#include "data.hpp"
#include "nn.hpp"
#include "tensor.hpp"

namespace fedsab {

struct DpConfig {
  double mean = 1e-6;
  double sigma = 1e-3;
};

struct StripConfig {
  int perturbations = 100;  // N blended copies per scored input
  double blend = 0.5;
  int bins = 20;
};

// Adds independent Gaussian(mean, sigma) noise to every coordinate, seeded
// per (round, client) by the caller-provided stream.
ParamSet dp_noise(const ParamSet& delta, const DpConfig& cfg, uint64_t seed_stream);

// Shannon entropy (base 2) of the softmax of one logits row.
double prediction_entropy_bits(const Tensor& logits, int row);

// Mean prediction entropy over N seeded blends of the input with benign
// images drawn without replacement from the perturbation set. The indices are
// canonicalized (sorted) first, so the score does not depend on caller order.
double strip_score(const Architecture& arch, const ParamSet& params, const Tensor& input_chw,
                   const Dataset& benign, std::vector<int> perturbation_indices,
                   const StripConfig& cfg, uint64_t seed);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [0, log2 K]
  std::vector<int64_t> counts;
};

// Entropy histogram over a cohort of images, fixed-width bins on [0, log2 K].
Histogram strip_histogram(const Architecture& arch, const ParamSet& params, const Dataset& cohort,
                          const Dataset& benign, const std::vector<int>& perturbation_indices,
                          const StripConfig& cfg, uint64_t seed);

// Intersection of the normalized histograms, in [0, 1].
double histogram_intersection(const Histogram& a, const Histogram& b);

// Gradient-weighted activation map over the LAST conv layer, upsampled
// (nearest) to the input size and min-max normalized; an all-zero map stays
// all-zero. raw_min/raw_max receive the pre-normalization range.
Tensor gradcam(const Architecture& arch, const ParamSet& params, const Tensor& input_chw,
               int class_index, double* raw_min = nullptr, double* raw_max = nullptr);

}  // namespace fedsab
