#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace fedsab {

// One recorded operation result. Gradients are allocated lazily during the
// backward sweep; scalar-producing ops additionally keep a float64 copy of
// their value so loss readouts do not round through float32.
struct Node {
  Tensor value;
  Tensor grad;  // empty until touched by backward
  bool has_grad = false;
  bool needs_grad = false;
  std::string tag;
  double scalar64 = 0.0;  // valid for scalar ops only
  std::vector<Node*> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (!has_grad) {
      grad = Tensor(value.shape());
      has_grad = true;
    }
  }
};

// Execution tape for reverse-mode differentiation. Ops append in execution
// order; backward() replays them exactly once in reverse.
class Tape {
 public:
  Node* leaf(Tensor value, bool needs_grad, std::string tag = {});

  // stride-1 2-D convolution, zero padding (k-1)/2 so spatial size is kept
  Node* conv2d(Node* x, Node* w, Node* b);
  Node* dense(Node* x, Node* w, Node* b);
  Node* relu(Node* x);
  Node* sigmoid(Node* x);
  Node* maxpool2(Node* x);
  Node* avgpool2(Node* x);
  Node* upsample2_nearest(Node* x);
  Node* concat_channels(Node* a, Node* b);
  Node* global_avgpool(Node* x);
  Node* flatten(Node* x);
  Node* reshape(Node* x, std::vector<int> shape);
  Node* add(Node* a, Node* b);
  Node* scale(Node* a, double s);

  // scalar losses and reductions (accumulated in float64)
  Node* mean_all(Node* x);
  Node* mse(Node* pred, Node* target);
  Node* bce_with_logits(Node* logits, const std::vector<scalar_t>& targets);
  Node* softmax_cross_entropy(Node* logits, const std::vector<int>& labels, int num_classes);
  Node* weighted_sum(const std::vector<std::pair<Node*, double>>& terms);

  // Seeds the output gradient (ones for scalars when seed is null) and runs
  // the reverse sweep. A tape may be consumed exactly once.
  void backward(Node* output, const Tensor* seed = nullptr);
  bool consumed() const { return consumed_; }
  size_t node_count() const { return nodes_.size(); }

  // Hash of every piecewise decision taken during the forward (ReLU activity,
  // maxpool argmax). Two evaluations with equal signatures lie on the same
  // smooth piece of the loss, which is the precondition for finite
  // differences to estimate a derivative.
  uint64_t decision_signature() const { return decision_sig_; }

  // After backward: params[tag] -= lr * grad for every tagged leaf whose tag
  // names an entry of params. Repeated leaves of one parameter accumulate.
  void apply_gradients(ParamSet& params, double lr) const;

  // After backward: gradients summed per tag, conformant with params (zeros
  // for parameters that received none).
  ParamSet collect_gradients(const ParamSet& params) const;

 private:
  Node* make(Tensor value, std::vector<Node*> parents);
  void fold_decision(uint64_t bits) {
    decision_sig_ = (decision_sig_ ^ bits) * 1099511628211ULL;
  }
  std::vector<std::unique_ptr<Node>> nodes_;
  bool consumed_ = false;
  uint64_t decision_sig_ = 14695981039346656037ULL;
};

}  // namespace fedsab
