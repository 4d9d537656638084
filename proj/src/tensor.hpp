#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace fedsab {

// In-memory scalar type. Values are held in float64 (the float32 noise floor
// is too coarse for the finite-difference gradient checks this engine must
// satisfy); the on-disk parameter format stays float32.
using scalar_t = double;

// Dense row-major tensor. Values are expected to stay finite; the training
// loops check for NaN explicitly where divergence is a possibility.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<scalar_t> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, scalar_t v);
  static Tensor scalar(scalar_t v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  scalar_t* data() { return data_.data(); }
  const scalar_t* data() const { return data_.data(); }
  scalar_t& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  scalar_t operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // [B,C,H,W] accessor used by image code paths
  scalar_t& at4(int b, int c, int h, int w);
  scalar_t at4(int b, int c, int h, int w) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(scalar_t v);

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<scalar_t> data_;
};

// Ordered map layer-name -> Tensor. Iteration order is insertion order; two
// sets are conformant iff names, order, and shapes all match. Gradient sets
// reuse this type (one gradient tensor per parameter tensor).
class ParamSet {
 public:
  void add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  size_t size() const { return entries_.size(); }
  const std::string& name_at(size_t i) const { return entries_[i].first; }
  Tensor& tensor_at(size_t i) { return entries_[i].second; }
  const Tensor& tensor_at(size_t i) const { return entries_[i].second; }

  int64_t total_values() const;
  bool conformant_with(const ParamSet& o) const;

  ParamSet clone_zeroed() const;

  // Flat binary format: magic "FSAB0001", LE u32 tensor count, then per
  // tensor u16 name length, UTF-8 name, u8 rank, u32 extents, LE f32 payload.
  // Values round to float32 on save and widen on load.
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// delta = a - b, conformant inputs
ParamSet param_diff(const ParamSet& a, const ParamSet& b);
// dst += scale * src
void param_axpy(ParamSet& dst, const ParamSet& src, scalar_t scale);

}  // namespace fedsab
