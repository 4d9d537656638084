#include "tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "util.hpp"

namespace fedsab {

namespace {

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    check(d > 0, ErrorKind::Input, "tensor extents must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<scalar_t> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check(shape_product(shape_) == static_cast<int64_t>(data_.size()), ErrorKind::Input,
        "tensor data length does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, scalar_t v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

scalar_t& Tensor::at4(int b, int c, int h, int w) {
  const int C = shape_[1], H = shape_[2], W = shape_[3];
  return data_[static_cast<size_t>(((static_cast<int64_t>(b) * C + c) * H + h) * W + w)];
}

scalar_t Tensor::at4(int b, int c, int h, int w) const {
  const int C = shape_[1], H = shape_[2], W = shape_[3];
  return data_[static_cast<size_t>(((static_cast<int64_t>(b) * C + c) * H + h) * W + w)];
}

bool Tensor::all_finite() const {
  for (scalar_t v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(scalar_t v) {
  for (auto& x : data_) x = v;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void ParamSet::add(const std::string& name, Tensor t) {
  check(!index_.count(name), ErrorKind::Usage, "duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
}

bool ParamSet::has(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  check(it != index_.end(), ErrorKind::Usage, "unknown parameter: " + name);
  return entries_[it->second].second;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  check(it != index_.end(), ErrorKind::Usage, "unknown parameter: " + name);
  return entries_[it->second].second;
}

int64_t ParamSet::total_values() const {
  int64_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

bool ParamSet::conformant_with(const ParamSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != o.entries_[i].first) return false;
    if (entries_[i].second.shape() != o.entries_[i].second.shape()) return false;
  }
  return true;
}

ParamSet ParamSet::clone_zeroed() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor(t.shape()));
  return out;
}

namespace {

constexpr char kMagic[8] = {'F', 'S', 'A', 'B', '0', '0', '0', '1'};

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void ParamSet::save(const std::string& path) const {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    check(name.size() <= UINT16_MAX, ErrorKind::Usage, "parameter name too long");
    put_u16(buf, static_cast<uint16_t>(name.size()));
    buf.append(name);
    check(t.rank() <= UINT8_MAX, ErrorKind::Usage, "tensor rank too large");
    buf.push_back(static_cast<char>(t.rank()));
    for (int d : t.shape()) put_u32(buf, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < t.size(); ++i) {
      uint32_t bits;
      const float v = static_cast<float>(t[i]);
      std::memcpy(&bits, &v, 4);
      put_u32(buf, bits);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorKind::Io, "cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  check(f.good(), ErrorKind::Io, "write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorKind::Io, "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  size_t n = buf.size(), off = 0;
  auto need = [&](size_t k, const char* what) {
    check(off + k <= n, ErrorKind::Format, std::string("truncated param file at ") + what + ": " + path);
  };
  need(8, "magic");
  check(std::memcmp(p, kMagic, 8) == 0, ErrorKind::Format, "bad magic in param file: " + path);
  off = 8;
  need(4, "tensor count");
  uint32_t count = get_u32(p + off);
  off += 4;
  ParamSet out;
  for (uint32_t i = 0; i < count; ++i) {
    need(2, "name length");
    uint16_t name_len = get_u16(p + off);
    off += 2;
    need(name_len, "name");
    std::string name(buf.data() + off, name_len);
    off += name_len;
    need(1, "rank");
    int rank = p[off++];
    check(rank >= 1, ErrorKind::Format, "zero-rank tensor in param file: " + path);
    std::vector<int> shape(static_cast<size_t>(rank));
    int64_t total = 1;
    for (int d = 0; d < rank; ++d) {
      need(4, "extent");
      uint32_t e = get_u32(p + off);
      off += 4;
      check(e > 0, ErrorKind::Format, "zero extent in param file: " + path);
      shape[static_cast<size_t>(d)] = static_cast<int>(e);
      total *= e;
    }
    need(static_cast<size_t>(total) * 4, "payload");
    std::vector<scalar_t> data(static_cast<size_t>(total));
    for (int64_t k = 0; k < total; ++k) {
      uint32_t bits = get_u32(p + off);
      off += 4;
      float v;
      std::memcpy(&v, &bits, 4);
      data[static_cast<size_t>(k)] = v;
    }
    out.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

ParamSet param_diff(const ParamSet& a, const ParamSet& b) {
  check(a.conformant_with(b), ErrorKind::Config, "param_diff: non-conformant sets");
  ParamSet out;
  for (size_t i = 0; i < a.size(); ++i) {
    const Tensor& ta = a.tensor_at(i);
    const Tensor& tb = b.tensor_at(i);
    Tensor d(ta.shape());
    for (int64_t k = 0; k < ta.size(); ++k) d[k] = ta[k] - tb[k];
    out.add(a.name_at(i), std::move(d));
  }
  return out;
}

void param_axpy(ParamSet& dst, const ParamSet& src, scalar_t scale) {
  check(dst.conformant_with(src), ErrorKind::Config, "param_axpy: non-conformant sets");
  for (size_t i = 0; i < dst.size(); ++i) {
    Tensor& d = dst.tensor_at(i);
    const Tensor& s = src.tensor_at(i);
    for (int64_t k = 0; k < d.size(); ++k) d[k] += scale * s[k];
  }
}

}  // namespace fedsab
