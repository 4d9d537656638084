#include "data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "util.hpp"

namespace fedsab {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorKind::Io, "cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

uint32_t be32(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_be32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;
constexpr size_t kCifarRecord = 3073;  // 1 label byte + 32*32*3 pixels

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);
  check(img.size() >= 16, ErrorKind::Format, "IDX images header truncated: " + images_path);
  check(lab.size() >= 8, ErrorKind::Format, "IDX labels header truncated: " + labels_path);
  const auto* ip = reinterpret_cast<const unsigned char*>(img.data());
  const auto* lp = reinterpret_cast<const unsigned char*>(lab.data());
  check(be32(ip) == kIdxImagesMagic, ErrorKind::Format,
        "IDX images magic mismatch (want 0x00000803): " + images_path);
  check(be32(lp) == kIdxLabelsMagic, ErrorKind::Format,
        "IDX labels magic mismatch (want 0x00000801): " + labels_path);
  const uint32_t n_img = be32(ip + 4), rows = be32(ip + 8), cols = be32(ip + 12);
  const uint32_t n_lab = be32(lp + 4);
  check(n_img == n_lab, ErrorKind::Format, "IDX image/label count mismatch: " + std::to_string(n_img) +
                                               " images vs " + std::to_string(n_lab) + " labels");
  check(img.size() == 16 + static_cast<size_t>(n_img) * rows * cols, ErrorKind::Format,
        "IDX images payload truncated: " + images_path);
  check(lab.size() == 8 + static_cast<size_t>(n_lab), ErrorKind::Format,
        "IDX labels payload truncated: " + labels_path);

  Dataset ds;
  ds.name = "idx";
  int max_label = 0;
  ds.examples.reserve(n_img);
  const unsigned char* px = ip + 16;
  const unsigned char* lb = lp + 8;
  for (uint32_t i = 0; i < n_img; ++i) {
    Tensor t({1, static_cast<int>(rows), static_cast<int>(cols)});
    for (uint32_t k = 0; k < rows * cols; ++k)
      t[k] = static_cast<scalar_t>(px[static_cast<size_t>(i) * rows * cols + k]) / 255.0;
    const int label = lb[i];
    max_label = std::max(max_label, label);
    ds.examples.push_back({std::move(t), label});
  }
  ds.num_classes = max_label + 1;
  check(!ds.examples.empty(), ErrorKind::Format, "IDX dataset is empty: " + images_path);
  return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  check(!ds.empty(), ErrorKind::Input, "write_idx: empty dataset");
  check(ds.channels() == 1, ErrorKind::Input, "write_idx: IDX stores grayscale images");
  const int rows = ds.height(), cols = ds.width();
  std::string img, lab;
  put_be32(img, kIdxImagesMagic);
  put_be32(img, static_cast<uint32_t>(ds.size()));
  put_be32(img, static_cast<uint32_t>(rows));
  put_be32(img, static_cast<uint32_t>(cols));
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, static_cast<uint32_t>(ds.size()));
  for (const auto& ex : ds.examples) {
    for (int64_t k = 0; k < ex.pixels.size(); ++k) {
      const double v = std::clamp(ex.pixels[k], 0.0, 1.0);
      img.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    lab.push_back(static_cast<char>(static_cast<unsigned char>(ex.label)));
  }
  for (const auto& [path, body] : {std::pair{images_path, &img}, std::pair{labels_path, &lab}}) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), ErrorKind::Io, "cannot open for writing: " + path);
    f.write(body->data(), static_cast<std::streamsize>(body->size()));
    check(f.good(), ErrorKind::Io, "write failed: " + path);
  }
}

Dataset load_cifar_binary(const std::vector<std::string>& paths, int num_classes) {
  Dataset ds;
  ds.name = "cifar";
  ds.num_classes = num_classes;
  for (const auto& path : paths) {
    const std::string buf = read_file(path);
    check(buf.size() % kCifarRecord == 0, ErrorKind::Format,
          "CIFAR batch length not a multiple of 3073: " + path);
    const size_t records = buf.size() / kCifarRecord;
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    for (size_t r = 0; r < records; ++r) {
      const unsigned char* rec = p + r * kCifarRecord;
      const int label = rec[0];
      check(label < num_classes, ErrorKind::Format,
            "CIFAR label byte " + std::to_string(label) + " out of range in " + path);
      Tensor t({3, 32, 32});
      for (int k = 0; k < 3072; ++k) t[k] = static_cast<scalar_t>(rec[1 + k]) / 255.0;
      ds.examples.push_back({std::move(t), label});
    }
  }
  check(!ds.examples.empty(), ErrorKind::Format, "CIFAR dataset is empty");
  return ds;
}

Dataset synth_dataset(uint64_t seed, int n, int num_classes, std::array<int, 3> shape) {
  check(num_classes >= 1 && n >= num_classes, ErrorKind::Input,
        "synth_dataset: need n >= num_classes >= 1");
  const int C = shape[0], H = shape[1], W = shape[2];
  Rng rng(stream_seed(seed, 0, 0, Stream::Synth));

  // Per-class mean pattern: a soft blob at a class-specific position plus a
  // faint class-specific horizontal ramp, kept inside [0.1, 0.9] so the +-0.1
  // noise rarely clips. The contrast is deliberately modest: class means
  // overlap enough that a small CNN converges near (not at) perfect accuracy,
  // which keeps benign gradients alive the way a real dataset would.
  std::vector<Tensor> means;
  means.reserve(static_cast<size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    Tensor m({C, H, W});
    const int denom = std::max(1, num_classes - 1);
    const double cy = (0.25 + 0.5 * ((k * 3) % num_classes) / denom) * (H - 1);
    const double cx = (0.25 + 0.5 * ((k * 7 + 2) % num_classes) / denom) * (W - 1);
    const double sigma2 = 2.0 * std::pow(0.22 * (H + W) / 2.0, 2.0);
    const double ramp = 0.07 * std::cos(2.0 * M_PI * k / num_classes);
    for (int c = 0; c < C; ++c) {
      const double chan = (c == k % std::max(1, C)) ? 1.0 : 0.7;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          const double blob = 0.19 * std::exp(-d2 / sigma2);
          const double v =
              0.35 + chan * blob + ramp * (static_cast<double>(x) / std::max(1, W - 1) - 0.5);
          m[(static_cast<int64_t>(c) * H + y) * W + x] = std::clamp(v, 0.1, 0.9);
        }
    }
    means.push_back(std::move(m));
  }

  Dataset ds;
  ds.name = "synth";
  ds.num_classes = num_classes;
  ds.examples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % num_classes;  // every class appears
    Tensor t({C, H, W});
    const Tensor& m = means[static_cast<size_t>(label)];
    for (int64_t k = 0; k < t.size(); ++k)
      t[k] = std::clamp(m[k] + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    ds.examples.push_back({std::move(t), label});
  }
  return ds;
}

Dataset take_per_class(const Dataset& ds, int per_class) {
  check(per_class >= 1, ErrorKind::Input, "take_per_class: per_class must be >= 1");
  Dataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  std::vector<int> counts(static_cast<size_t>(ds.num_classes), 0);
  for (const auto& ex : ds.examples) {
    if (counts[static_cast<size_t>(ex.label)] >= per_class) continue;
    ++counts[static_cast<size_t>(ex.label)];
    out.examples.push_back(ex);
  }
  return out;
}

PartitionPlan dirichlet_partition(const Dataset& ds, int num_clients, double alpha, uint64_t seed) {
  check(!ds.empty(), ErrorKind::Input, "dirichlet_partition: empty dataset");
  check(num_clients >= 1, ErrorKind::Input, "dirichlet_partition: need at least one client");
  check(alpha > 0.0, ErrorKind::Input, "dirichlet_partition: alpha must be > 0");

  PartitionPlan plan;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.assignments.assign(static_cast<size_t>(num_clients), {});

  // indices grouped by class, in dataset order
  std::vector<std::vector<int>> by_class(static_cast<size_t>(ds.num_classes));
  for (size_t i = 0; i < ds.examples.size(); ++i)
    by_class[static_cast<size_t>(ds.examples[i].label)].push_back(static_cast<int>(i));

  Rng rng(stream_seed(seed, 0, 0, Stream::Partition));
  for (int cls = 0; cls < ds.num_classes; ++cls) {
    const auto& idx = by_class[static_cast<size_t>(cls)];
    if (idx.empty()) continue;
    const std::vector<double> props = rng.dirichlet(alpha, num_clients);
    const int total = static_cast<int>(idx.size());

    // largest-remainder rounding: floors first, then the biggest fractional
    // parts get one extra (ties to the lower client index)
    std::vector<int> count(static_cast<size_t>(num_clients), 0);
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (int k = 0; k < num_clients; ++k) {
      const double target = props[static_cast<size_t>(k)] * total;
      count[static_cast<size_t>(k)] = static_cast<int>(std::floor(target));
      assigned += count[static_cast<size_t>(k)];
      rema.push_back({target - std::floor(target), k});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int r = 0; r < total - assigned; ++r)
      ++count[static_cast<size_t>(rema[static_cast<size_t>(r)].second)];

    int cursor = 0;
    for (int k = 0; k < num_clients; ++k)
      for (int c = 0; c < count[static_cast<size_t>(k)]; ++c)
        plan.assignments[static_cast<size_t>(k)].push_back(idx[static_cast<size_t>(cursor++)]);
  }
  for (auto& a : plan.assignments) std::sort(a.begin(), a.end());
  return plan;
}

void write_pnm(const Tensor& chw, const std::string& path) {
  check(chw.rank() == 3, ErrorKind::Input, "write_pnm: image must be [C,H,W]");
  const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  check(C == 1 || C == 3, ErrorKind::Input, "write_pnm: 1 or 3 channels required");
  std::string body = C == 1 ? "P5\n" : "P6\n";
  body += std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        const double v = std::clamp(chw[(static_cast<int64_t>(c) * H + y) * W + x], 0.0, 1.0);
        body.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorKind::Io, "cannot open for writing: " + path);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  check(f.good(), ErrorKind::Io, "write failed: " + path);
}

Tensor read_pnm(const std::string& path) {
  const std::string buf = read_file(path);
  check(buf.size() > 2, ErrorKind::Format, "PNM too short: " + path);
  check(buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6'), ErrorKind::Format,
        "unsupported PNM type (want P5/P6): " + path);
  const bool gray = buf[1] == '5';
  // header: three whitespace-separated ints after the magic, # comments allowed
  size_t pos = 2;
  int fields[3];
  for (int f = 0; f < 3; ++f) {
    while (pos < buf.size() &&
           (std::isspace(static_cast<unsigned char>(buf[pos])) || buf[pos] == '#')) {
      if (buf[pos] == '#')
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      else
        ++pos;
    }
    check(pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos])), ErrorKind::Format,
          "malformed PNM header: " + path);
    int v = 0;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos])))
      v = v * 10 + (buf[pos++] - '0');
    fields[f] = v;
  }
  check(pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos])), ErrorKind::Format,
        "malformed PNM header: " + path);
  ++pos;
  const int W = fields[0], H = fields[1], maxval = fields[2];
  check(W > 0 && H > 0 && maxval == 255, ErrorKind::Format, "unsupported PNM geometry: " + path);
  const int C = gray ? 1 : 3;
  check(buf.size() - pos == static_cast<size_t>(C) * H * W, ErrorKind::Format,
        "PNM payload truncated: " + path);
  Tensor t({C, H, W});
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c)
        t[(static_cast<int64_t>(c) * H + y) * W + x] =
            static_cast<scalar_t>(p[(static_cast<size_t>(y) * W + x) * C + c]) / 255.0;
  return t;
}

}  // namespace fedsab
