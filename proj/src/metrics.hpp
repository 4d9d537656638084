#pragma once

#include <cstdint>
#include <vector>

#include "data.hpp"
#include "nn.hpp"

namespace fedsab {

// Top-1 predictions for a whole dataset, batched.
std::vector<int> predict_all(const Architecture& arch, const ParamSet& params, const Dataset& ds,
                             int batch_size = 64);

// Fraction of the poisoned test set predicted as the target class. The set is
// expected to exclude true-target-class originals (build_poison_dataset does).
double attack_success_rate(const Architecture& arch, const ParamSet& params,
                           const Dataset& poisoned_test, int target_class);

// Top-1 accuracy on the benign test set.
double benign_accuracy(const Architecture& arch, const ParamSet& params, const Dataset& test);

// ba_clean(round) - ba_attacked(round); the clean series comes from a
// same-seed run with the attack disabled.
double test_accuracy_loss(const std::vector<double>& ba_clean,
                          const std::vector<double>& ba_attacked, int round);

// 64-bit DCT perceptual hash. Pipeline, bit-exact: grayscale by channel mean;
// bilinear resize to 32x32 (corner-aligned); orthonormal 2-D DCT-II; top-left
// 8x8 block including DC; median of those 64; bit = coeff > median, scanned
// row-major, first coefficient at the most significant bit.
uint64_t phash64(const Tensor& image_chw);

// Hamming distance in [0, 64].
int phash_distance(uint64_t a, uint64_t b);

}  // namespace fedsab
