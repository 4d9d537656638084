#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace fedsab {

// A labeled image with pixels in [0,1], stored [C,H,W].
struct ImageExample {
  Tensor pixels;
  int label = 0;
};

struct Dataset {
  std::vector<ImageExample> examples;
  int num_classes = 0;
  std::string name;

  bool empty() const { return examples.empty(); }
  size_t size() const { return examples.size(); }
  int channels() const { return examples.front().pixels.dim(0); }
  int height() const { return examples.front().pixels.dim(1); }
  int width() const { return examples.front().pixels.dim(2); }
};

// IDX (big-endian) loader; images magic 0x00000803, labels magic 0x00000801.
// Pixels are byte/255 grayscale.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes a dataset back out as an IDX pair (byte = round(pixel*255)).
void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// CIFAR binary batches: records of 1 label byte + 3072 pixel bytes
// (R plane, G plane, B plane), 32x32.
Dataset load_cifar_binary(const std::vector<std::string>& paths, int num_classes = 10);

// Class-conditional blob images: a per-class mean pattern plus uniform noise
// of amplitude 0.1, clamped to [0,1]. Deterministic in the seed.
Dataset synth_dataset(uint64_t seed, int n, int num_classes, std::array<int, 3> shape);

// Keeps the first `per_class` examples of every class, in dataset order.
Dataset take_per_class(const Dataset& ds, int per_class);

struct PartitionPlan {
  std::vector<std::vector<int>> assignments;  // per-client ordered index lists
  double alpha = 0.0;
  uint64_t seed = 0;
};

// Per class, draws client proportions ~ Dirichlet(alpha,...,alpha) and
// allocates that class's indices by largest-remainder rounding, so the counts
// are exact and the index lists form a disjoint cover.
PartitionPlan dirichlet_partition(const Dataset& ds, int num_clients, double alpha, uint64_t seed);

// PGM (P5) / PPM (P6) image dumps and loads, 8-bit, for inspection and the
// directory-based CLI modes.
void write_pnm(const Tensor& chw, const std::string& path);
Tensor read_pnm(const std::string& path);

}  // namespace fedsab
