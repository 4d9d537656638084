#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "data.hpp"
#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace fedsab {

// Fixed-length bit vector tied to a class label string.
struct SecretBits {
  std::vector<uint8_t> bits;  // each 0 or 1
  std::string source_label;
  int nbits = 32;
};

// Deterministic bits from a 64-bit mixing hash of (label, seed) expanded by a
// block counter. nbits must lie in [8, 256].
SecretBits secret_from_label(const std::string& label, int nbits, uint64_t seed);

// Encoder: U-Net style (down conv path, up path, skip concat); the secret
// enters as extra input channels, one plane per 8-bit group, each produced by
// a trainable linear projection. Decoder: conv stack -> dense -> nbits
// logits. Critic: conv stack -> scalar.
struct StegoNets {
  ParamSet encoder;
  ParamSet decoder;
  ParamSet critic;
  int nbits = 32;
  int channels = 1;
  int height = 28;
  int width = 28;
};

struct StegoTrainConfig {
  double w1 = 2.0;  // image loss
  double w2 = 1.0;  // perceptual loss
  double w3 = 1.5;  // secret loss
  double w4 = 0.5;  // critic term
  int epochs = 30;
  int batch = 16;
  int nbits = 32;
  // warm-up: the image-side weights (w1, w2, w4) scale linearly from 0 to
  // full over this many epochs, so the secret channel is learned before the
  // residual is squeezed
  int ramp_epochs = 8;
  double lr_encoder = 0.02;
  double lr_critic = 0.02;
  double critic_clip = 0.01;
  uint64_t seed = 0;
};

struct StegoEpochTrace {
  int epoch = 0;
  double loss_image = 0.0;
  double loss_perceptual = 0.0;
  double loss_secret = 0.0;
  double loss_critic = 0.0;
  double joint = 0.0;
};

struct StegoTrainStats {
  std::vector<StegoEpochTrace> trace;
  double heldout_bit_accuracy = 0.0;
  double heldout_loss_image = 0.0;
};

StegoNets init_stego_nets(int channels, int height, int width, int nbits, Rng& rng);

// Residual for one [C,H,W] image; same shape, unclamped.
Tensor encode_residual(const StegoNets& nets, const Tensor& image, const SecretBits& secret);

// clamp(image + residual, 0, 1)
Tensor apply_trigger(const Tensor& image, const Tensor& residual);

// Per-bit logits; recovered bit i is sigmoid(logit_i) > 0.5.
std::vector<double> decode_secret(const StegoNets& nets, const Tensor& image);
std::vector<uint8_t> bits_from_logits(const std::vector<double>& logits);

// Scalar loss terms (float64). The tape-based training path builds the same
// terms; unit tests cross-check the two routes.
double loss_image(const Tensor& encoded, const Tensor& original);
double loss_secret(const std::vector<double>& logits, const SecretBits& secret);
double loss_perceptual(const Tensor& encoded, const Tensor& original);
// (encoder_term, critic_term) = (mean critic(real) - mean critic(fake), its negation)
std::pair<double, double> loss_critic(const StegoNets& nets, const Tensor& real_batch,
                                      const Tensor& fake_batch);
double joint_loss(double l_image, double l_perceptual, double l_secret, double encoder_term,
                  const StegoTrainConfig& cfg);

// Alternating schedule: one critic step (with weight clipping) per
// encoder/decoder step on the joint loss. Secrets are the per-class vectors;
// each training example embeds a randomly drawn class secret.
StegoNets train_stego(const Dataset& train, const Dataset& heldout,
                      const std::vector<SecretBits>& class_secrets, const StegoTrainConfig& cfg,
                      StegoTrainStats* stats = nullptr);

// Baseline triggers. RGB: bottom-right 5x5 white block with a centered black
// cross. Grayscale: bottom-right 4x4 checkerboard starting white.
Tensor badnets_trigger(const Tensor& image);

constexpr int kDbaAllParts = -1;
// Four 1x2 blocks in the top-left region; part selects one block, -1 paints
// all four (evaluation mode).
Tensor dba_trigger(const Tensor& image, int part);

using TriggerFn = std::function<Tensor(const Tensor& image)>;

struct PoisonedDataset {
  Dataset data;                     // labels are the attack target
  std::vector<int> original_labels; // per example
  int target_class = 0;
};

// Train side: a seeded fraction of examples get the trigger and the target
// label. Test side: every example whose true label differs from the target,
// triggered (the ASR convention).
std::pair<PoisonedDataset, PoisonedDataset> build_poison_dataset(const Dataset& ds,
                                                                 const TriggerFn& trigger,
                                                                 int target_class, double fraction,
                                                                 uint64_t seed);

// Tape helpers shared by training and the defense code.
Node* encoder_forward(Tape& tape, const StegoNets& nets, Node* images,
                      const std::vector<const SecretBits*>& secrets, bool params_need_grad);
Node* decoder_forward(Tape& tape, const StegoNets& nets, Node* images, bool params_need_grad);
Node* critic_forward(Tape& tape, const StegoNets& nets, Node* images, bool params_need_grad);
Node* perceptual_loss_node(Tape& tape, Node* a, Node* b);

}  // namespace fedsab
