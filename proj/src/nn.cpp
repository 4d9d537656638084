#include "nn.hpp"

#include <cmath>
#include <cstring>

#include "util.hpp"

namespace fedsab {

namespace {

std::string layer_desc(const Architecture& arch, int idx) {
  if (idx < 0) return "<batch input>";
  return "'" + arch.layers[static_cast<size_t>(idx)].name + "'";
}

int resolve_input(int layer_idx, int declared) {
  return declared >= 0 ? declared : layer_idx - 1;
}

}  // namespace

std::vector<std::vector<int>> infer_shapes(const Architecture& arch) {
  std::vector<std::vector<int>> shapes;
  shapes.reserve(arch.layers.size());
  // batch dim is symbolic; use -1 markers replaced by B at run time. Shapes
  // here carry a placeholder batch of 1.
  std::vector<int> input_shape = {1, arch.in_channels, arch.in_h, arch.in_w};
  auto shape_of = [&](int idx, int self) -> const std::vector<int>& {
    check(idx < self, ErrorKind::Config,
          "layer " + layer_desc(arch, self) + " reads a later layer " + layer_desc(arch, idx));
    if (idx < 0) return input_shape;
    return shapes[static_cast<size_t>(idx)];
  };

  for (size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& spec = arch.layers[li];
    const int self = static_cast<int>(li);
    const int in_idx = resolve_input(self, spec.input);
    check(in_idx >= -1, ErrorKind::Config, "layer " + layer_desc(arch, self) + " has no input");
    const std::vector<int>& in = shape_of(in_idx, self);
    auto mismatch = [&](const std::string& why) {
      fail(ErrorKind::Config, "shape mismatch between layers " + layer_desc(arch, in_idx) + " and " +
                                  layer_desc(arch, self) + ": " + why);
    };
    std::vector<int> out;
    switch (spec.kind) {
      case LayerKind::Conv2d: {
        if (in.size() != 4) mismatch("convolution expects a [B,C,H,W] input");
        check(spec.out_ch > 0 && spec.ksize >= 1 && spec.ksize % 2 == 1, ErrorKind::Config,
              "layer " + layer_desc(arch, self) + ": conv needs odd ksize and out_ch > 0");
        out = {in[0], spec.out_ch, in[2], in[3]};
        break;
      }
      case LayerKind::Dense: {
        if (in.size() != 2) mismatch("dense expects a flattened [B,N] input");
        check(spec.out_dim > 0, ErrorKind::Config,
              "layer " + layer_desc(arch, self) + ": dense needs out_dim > 0");
        out = {in[0], spec.out_dim};
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::Sigmoid:
        out = in;
        break;
      case LayerKind::MaxPool2: {
        if (in.size() != 4) mismatch("pooling expects a [B,C,H,W] input");
        if (in[2] < 2 || in[3] < 2) mismatch("spatial dims too small for 2x2 pooling");
        out = {in[0], in[1], in[2] / 2, in[3] / 2};
        break;
      }
      case LayerKind::Upsample2: {
        if (in.size() != 4) mismatch("upsample expects a [B,C,H,W] input");
        out = {in[0], in[1], in[2] * 2, in[3] * 2};
        break;
      }
      case LayerKind::Concat: {
        const int in2_idx = spec.input2;
        check(in2_idx >= 0, ErrorKind::Config,
              "layer " + layer_desc(arch, self) + ": concat needs an explicit second input");
        const std::vector<int>& in2 = shape_of(in2_idx, self);
        if (in.size() != 4 || in2.size() != 4) mismatch("concat expects [B,C,H,W] inputs");
        if (in[2] != in2[2] || in[3] != in2[3])
          fail(ErrorKind::Config, "shape mismatch between layers " + layer_desc(arch, in_idx) + " and " +
                                      layer_desc(arch, in2_idx) + " feeding " + layer_desc(arch, self) +
                                      ": spatial dims differ");
        out = {in[0], in[1] + in2[1], in[2], in[3]};
        break;
      }
      case LayerKind::GlobalAvgPool: {
        if (in.size() != 4) mismatch("global average pool expects a [B,C,H,W] input");
        out = {in[0], in[1]};
        break;
      }
      case LayerKind::Flatten: {
        int64_t rest = 1;
        for (size_t d = 1; d < in.size(); ++d) rest *= in[d];
        out = {in[0], static_cast<int>(rest)};
        break;
      }
    }
    shapes.push_back(std::move(out));
  }
  check(!arch.layers.empty(), ErrorKind::Config, "architecture has no layers");
  const auto& last = shapes.back();
  check(last.size() == 2 && last[1] == arch.num_classes, ErrorKind::Config,
        "final layer " + layer_desc(arch, static_cast<int>(arch.layers.size()) - 1) +
            " must emit [B," + std::to_string(arch.num_classes) + "] logits");
  return shapes;
}

ParamSet init_params(const Architecture& arch, Rng& rng) {
  auto shapes = infer_shapes(arch);
  ParamSet params;
  std::vector<int> input_shape = {1, arch.in_channels, arch.in_h, arch.in_w};
  for (size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& spec = arch.layers[li];
    const int in_idx = resolve_input(static_cast<int>(li), spec.input);
    const std::vector<int>& in = in_idx < 0 ? input_shape : shapes[static_cast<size_t>(in_idx)];
    if (spec.kind == LayerKind::Conv2d) {
      const int ci = in[1], k = spec.ksize, co = spec.out_ch;
      const double fan_in = static_cast<double>(ci) * k * k;
      const double fan_out = static_cast<double>(co) * k * k;
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      Tensor w({co, ci, k, k});
      for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
      params.add(spec.name + ".w", std::move(w));
      params.add(spec.name + ".b", Tensor({co}));
    } else if (spec.kind == LayerKind::Dense) {
      const int n = in[1], m = spec.out_dim;
      const double bound = std::sqrt(6.0 / (static_cast<double>(n) + m));
      Tensor w({n, m});
      for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
      params.add(spec.name + ".w", std::move(w));
      params.add(spec.name + ".b", Tensor({m}));
    }
  }
  return params;
}

ForwardResult forward_pass(Tape& tape, const Architecture& arch, const ParamSet& params,
                           const Tensor& batch, bool params_need_grad, bool input_needs_grad) {
  infer_shapes(arch);  // validates wiring; errors name the offending layers
  check(batch.rank() == 4, ErrorKind::Input, "batch must be [B,C,H,W]");
  check(batch.dim(1) == arch.in_channels && batch.dim(2) == arch.in_h && batch.dim(3) == arch.in_w,
        ErrorKind::Input, "batch shape " + batch.shape_str() + " does not match model input");

  ForwardResult res;
  res.input = tape.leaf(batch, input_needs_grad, "input");
  std::vector<Node*> outputs(arch.layers.size(), nullptr);
  auto node_of = [&](int idx) { return idx < 0 ? res.input : outputs[static_cast<size_t>(idx)]; };

  for (size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& spec = arch.layers[li];
    Node* in = node_of(resolve_input(static_cast<int>(li), spec.input));
    Node* out = nullptr;
    switch (spec.kind) {
      case LayerKind::Conv2d: {
        Node* w = tape.leaf(params.get(spec.name + ".w"), params_need_grad, spec.name + ".w");
        Node* b = tape.leaf(params.get(spec.name + ".b"), params_need_grad, spec.name + ".b");
        res.param_nodes.emplace_back(spec.name + ".w", w);
        res.param_nodes.emplace_back(spec.name + ".b", b);
        out = tape.conv2d(in, w, b);
        out->tag = spec.name;
        res.conv_outputs.push_back(out);
        break;
      }
      case LayerKind::Dense: {
        Node* w = tape.leaf(params.get(spec.name + ".w"), params_need_grad, spec.name + ".w");
        Node* b = tape.leaf(params.get(spec.name + ".b"), params_need_grad, spec.name + ".b");
        res.param_nodes.emplace_back(spec.name + ".w", w);
        res.param_nodes.emplace_back(spec.name + ".b", b);
        out = tape.dense(in, w, b);
        break;
      }
      case LayerKind::ReLU:
        out = tape.relu(in);
        break;
      case LayerKind::Sigmoid:
        out = tape.sigmoid(in);
        break;
      case LayerKind::MaxPool2:
        out = tape.maxpool2(in);
        break;
      case LayerKind::Upsample2:
        out = tape.upsample2_nearest(in);
        break;
      case LayerKind::Concat:
        out = tape.concat_channels(in, node_of(spec.input2));
        break;
      case LayerKind::GlobalAvgPool:
        out = tape.global_avgpool(in);
        break;
      case LayerKind::Flatten:
        out = tape.flatten(in);
        break;
    }
    outputs[li] = out;
  }
  res.logits = outputs.back();
  return res;
}

Tensor forward_infer(const Architecture& arch, const ParamSet& params, const Tensor& batch) {
  Tape tape;
  return forward_pass(tape, arch, params, batch, /*params_need_grad=*/false).logits->value;
}

std::pair<double, Tensor> cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
  check(logits.rank() == 2, ErrorKind::Input, "logits must be [B,K]");
  const int B = logits.dim(0), K = logits.dim(1);
  check(static_cast<int>(labels.size()) == B, ErrorKind::Input, "label count mismatch");
  Tensor grad({B, K});
  double acc = 0.0;
  for (int bi = 0; bi < B; ++bi) {
    const int label = labels[static_cast<size_t>(bi)];
    check(label >= 0 && label < K, ErrorKind::Input, "label out of range: " + std::to_string(label));
    const scalar_t* row = logits.data() + static_cast<int64_t>(bi) * K;
    double mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
    acc += -(row[label] - mx - std::log(denom));
    for (int k = 0; k < K; ++k) {
      const double p = std::exp(row[k] - mx) / denom;
      grad[static_cast<int64_t>(bi) * K + k] = (p - (k == label ? 1.0 : 0.0)) / static_cast<double>(B);
    }
  }
  return {acc / static_cast<double>(B), std::move(grad)};
}

ParamSet compute_gradients(const Architecture& arch, const ParamSet& params, const Tensor& batch,
                           const std::vector<int>& labels, double* loss_out) {
  Tape tape;
  ForwardResult fwd = forward_pass(tape, arch, params, batch, /*params_need_grad=*/true);
  Node* loss = tape.softmax_cross_entropy(fwd.logits, labels, arch.num_classes);
  tape.backward(loss);
  if (loss_out) *loss_out = loss->scalar64;
  ParamSet grads;
  std::map<std::string, Node*> by_name;
  for (auto& [name, node] : fwd.param_nodes) by_name[name] = node;
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name_at(i);
    auto it = by_name.find(name);
    if (it != by_name.end() && it->second->has_grad)
      grads.add(name, it->second->grad);
    else
      grads.add(name, Tensor(params.tensor_at(i).shape()));
  }
  return grads;
}

void sgd_update(ParamSet& params, const ParamSet& grads, scalar_t lr) {
  check(lr >= 0.0, ErrorKind::Config, "sgd_update: learning rate must be >= 0");
  check(params.conformant_with(grads), ErrorKind::Config, "sgd_update: non-conformant sets");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.tensor_at(i);
    const Tensor& g = grads.tensor_at(i);
    for (int64_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
  }
}

double eval_loss(const Architecture& arch, const ParamSet& params, const Tensor& batch,
                 const std::vector<int>& labels, uint64_t* sig_out) {
  Tape tape;
  Node* logits = forward_pass(tape, arch, params, batch, /*params_need_grad=*/false).logits;
  if (sig_out) *sig_out = tape.decision_signature();
  return cross_entropy_loss(logits->value, labels).first;
}

ParamSet finite_difference_oracle(const Architecture& arch, const ParamSet& params,
                                  const Tensor& batch, const std::vector<int>& labels, double eps) {
  check(eps > 0.0, ErrorKind::Input, "finite_difference_oracle: eps must be > 0");
  ParamSet work;
  for (size_t i = 0; i < params.size(); ++i) work.add(params.name_at(i), params.tensor_at(i));
  ParamSet grads = params.clone_zeroed();
  for (size_t i = 0; i < work.size(); ++i) {
    Tensor& t = work.tensor_at(i);
    Tensor& g = grads.tensor_at(i);
    for (int64_t k = 0; k < t.size(); ++k) {
      const scalar_t orig = t[k];
      const scalar_t plus = orig + eps;
      const scalar_t minus = orig - eps;
      t[k] = plus;
      const double lp = eval_loss(arch, work, batch, labels);
      t[k] = minus;
      const double lm = eval_loss(arch, work, batch, labels);
      t[k] = orig;
      // divide by the achieved spread so parameter quantization cannot bias
      // the estimate
      g[k] = (lp - lm) / (plus - minus);
    }
  }
  return grads;
}

Architecture make_small_cnn(int in_channels, int in_h, int in_w, int num_classes) {
  Architecture arch;
  arch.model_name = "small-cnn";
  arch.in_channels = in_channels;
  arch.in_h = in_h;
  arch.in_w = in_w;
  arch.num_classes = num_classes;
  arch.layers = {
      {.kind = LayerKind::Conv2d, .name = "conv1", .out_ch = 8, .ksize = 3},
      {.kind = LayerKind::ReLU, .name = "relu1"},
      {.kind = LayerKind::MaxPool2, .name = "pool1"},
      {.kind = LayerKind::Conv2d, .name = "conv2", .out_ch = 16, .ksize = 3},
      {.kind = LayerKind::ReLU, .name = "relu2"},
      {.kind = LayerKind::MaxPool2, .name = "pool2"},
      {.kind = LayerKind::Flatten, .name = "flat"},
      {.kind = LayerKind::Dense, .name = "fc", .out_dim = num_classes},
  };
  return arch;
}

const std::map<std::string, ModelBuilder>& model_registry() {
  static const std::map<std::string, ModelBuilder> registry = {
      {"small-cnn", &make_small_cnn},
  };
  return registry;
}

Architecture build_model(const std::string& name, int in_channels, int in_h, int in_w,
                         int num_classes) {
  auto it = model_registry().find(name);
  check(it != model_registry().end(), ErrorKind::Config, "unknown model: " + name);
  return it->second(in_channels, in_h, in_w, num_classes);
}

Tensor stack_batch(const std::vector<const Tensor*>& images) {
  check(!images.empty(), ErrorKind::Input, "stack_batch: empty batch");
  const Tensor& first = *images.front();
  check(first.rank() == 3, ErrorKind::Input, "stack_batch: images must be [C,H,W]");
  Tensor batch({static_cast<int>(images.size()), first.dim(0), first.dim(1), first.dim(2)});
  const int64_t stride = first.size();
  for (size_t i = 0; i < images.size(); ++i) {
    check(images[i]->same_shape(first), ErrorKind::Input, "stack_batch: mixed image shapes");
    std::memcpy(batch.data() + static_cast<int64_t>(i) * stride, images[i]->data(),
                static_cast<size_t>(stride) * sizeof(scalar_t));
  }
  return batch;
}

}  // namespace fedsab
