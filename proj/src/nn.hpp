#pragma once

#include <map>
#include <string>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace fedsab {

enum class LayerKind {
  Conv2d,
  Dense,
  ReLU,
  Sigmoid,
  MaxPool2,
  Upsample2,
  Concat,
  GlobalAvgPool,
  Flatten,
};

// Layers form a small DAG: `input` is the index of the feeding layer (-1 for
// the previous one, or the batch for layer 0); Concat also reads `input2`.
struct LayerSpec {
  LayerKind kind;
  std::string name;
  int input = -1;
  int input2 = -1;
  int out_ch = 0;  // Conv2d
  int ksize = 3;   // Conv2d
  int out_dim = 0; // Dense
};

struct Architecture {
  std::string model_name;
  int in_channels = 1;
  int in_h = 28;
  int in_w = 28;
  int num_classes = 10;
  std::vector<LayerSpec> layers;
};

// Validates layer wiring and returns per-layer output shapes. Raises a
// configuration error naming both layers on any mismatch.
std::vector<std::vector<int>> infer_shapes(const Architecture& arch);

ParamSet init_params(const Architecture& arch, Rng& rng);

struct ForwardResult {
  Node* logits = nullptr;
  Node* input = nullptr;
  std::vector<Node*> conv_outputs;           // in layer order; Grad-CAM taps the last
  std::vector<std::pair<std::string, Node*>> param_nodes;
};

ForwardResult forward_pass(Tape& tape, const Architecture& arch, const ParamSet& params,
                           const Tensor& batch, bool params_need_grad, bool input_needs_grad = false);

// Forward without gradient bookkeeping; returns logits [B,K].
Tensor forward_infer(const Architecture& arch, const ParamSet& params, const Tensor& batch);

// Mean cross-entropy over the batch plus the gradient w.r.t. logits,
// (softmax - one_hot) / B. Accumulated in float64.
std::pair<double, Tensor> cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

// forward + cross-entropy + backward; returns a gradient set conformant with
// `params`. Optionally reports the float64 loss.
ParamSet compute_gradients(const Architecture& arch, const ParamSet& params, const Tensor& batch,
                           const std::vector<int>& labels, double* loss_out = nullptr);

// p <- p - lr * g
void sgd_update(ParamSet& params, const ParamSet& grads, scalar_t lr);

// float64 loss readout used by the finite-difference oracle. When sig_out is
// given it receives the forward's piecewise-decision signature (see
// Tape::decision_signature).
double eval_loss(const Architecture& arch, const ParamSet& params, const Tensor& batch,
                 const std::vector<int>& labels, uint64_t* sig_out = nullptr);

// Central differences per parameter coordinate. Independent of the backward
// sweep: only the forward pass and the float64 loss readout are used.
ParamSet finite_difference_oracle(const Architecture& arch, const ParamSet& params,
                                  const Tensor& batch, const std::vector<int>& labels, double eps);

Architecture make_small_cnn(int in_channels, int in_h, int in_w, int num_classes);

// name -> builder; "small-cnn" is registered by default
using ModelBuilder = Architecture (*)(int, int, int, int);
const std::map<std::string, ModelBuilder>& model_registry();
Architecture build_model(const std::string& name, int in_channels, int in_h, int in_w,
                         int num_classes);

// Stacks [C,H,W] examples into a [B,C,H,W] batch.
Tensor stack_batch(const std::vector<const Tensor*>& images);

}  // namespace fedsab
