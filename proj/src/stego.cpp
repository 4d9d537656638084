#include "stego.hpp"

#include <algorithm>
#include <cmath>

#include "nn.hpp"
#include "util.hpp"

namespace fedsab {

namespace {

uint64_t hash_label(const std::string& label, uint64_t seed) {
  uint64_t h = mix64(seed ^ 0x5ab5ab5ab5ab5ab5ULL);
  for (unsigned char c : label) h = mix64(h ^ c);
  return h;
}

int secret_groups(int nbits) { return (nbits + 7) / 8; }

void xavier_fill(Tensor& t, double fan_in, double fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}

void add_conv(ParamSet& ps, const std::string& name, int in_ch, int out_ch, int k, Rng& rng) {
  Tensor w({out_ch, in_ch, k, k});
  xavier_fill(w, static_cast<double>(in_ch) * k * k, static_cast<double>(out_ch) * k * k, rng);
  ps.add(name + ".w", std::move(w));
  ps.add(name + ".b", Tensor({out_ch}));
}

void add_dense(ParamSet& ps, const std::string& name, int in_dim, int out_dim, Rng& rng) {
  Tensor w({in_dim, out_dim});
  xavier_fill(w, in_dim, out_dim, rng);
  ps.add(name + ".w", std::move(w));
  ps.add(name + ".b", Tensor({out_dim}));
}

Node* conv_block(Tape& tape, const ParamSet& ps, const std::string& name, Node* x, bool grad) {
  Node* w = tape.leaf(ps.get(name + ".w"), grad, name + ".w");
  Node* b = tape.leaf(ps.get(name + ".b"), grad, name + ".b");
  return tape.conv2d(x, w, b);
}

Node* dense_block(Tape& tape, const ParamSet& ps, const std::string& name, Node* x, bool grad) {
  Node* w = tape.leaf(ps.get(name + ".w"), grad, name + ".w");
  Node* b = tape.leaf(ps.get(name + ".b"), grad, name + ".b");
  return tape.dense(x, w, b);
}

// 3x3 fixed filters for the perceptual distance
const std::vector<scalar_t> kGauss = {1 / 16.0, 2 / 16.0, 1 / 16.0, 2 / 16.0, 4 / 16.0,
                                      2 / 16.0, 1 / 16.0, 2 / 16.0, 1 / 16.0};
const std::vector<scalar_t> kSobelX = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
const std::vector<scalar_t> kSobelY = {-1, -2, -1, 0, 0, 0, 1, 2, 1};

// Adam with the usual constants; the stego trainer needs per-parameter step
// scaling (the projection layers' gradients dwarf the conv layers').
struct AdamState {
  ParamSet m, v;
  int64_t t = 0;
};

AdamState adam_init(const ParamSet& params) {
  return {params.clone_zeroed(), params.clone_zeroed(), 0};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  state.t += 1;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.tensor_at(i);
    const Tensor& g = grads.tensor_at(i);
    Tensor& m = state.m.tensor_at(i);
    Tensor& v = state.v.tensor_at(i);
    for (int64_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

}  // namespace

SecretBits secret_from_label(const std::string& label, int nbits, uint64_t seed) {
  check(nbits >= 8 && nbits <= 256, ErrorKind::Input, "nbits must lie in [8,256]");
  SecretBits s;
  s.nbits = nbits;
  s.source_label = label;
  s.bits.reserve(static_cast<size_t>(nbits));
  const uint64_t h = hash_label(label, seed);
  for (int block = 0; s.bits.size() < static_cast<size_t>(nbits); ++block) {
    uint64_t word = mix64(h ^ static_cast<uint64_t>(block + 1));
    for (int i = 0; i < 64 && s.bits.size() < static_cast<size_t>(nbits); ++i) {
      s.bits.push_back(static_cast<uint8_t>(word & 1u));
      word >>= 1;
    }
  }
  return s;
}

StegoNets init_stego_nets(int channels, int height, int width, int nbits, Rng& rng) {
  check(height % 4 == 0 && width % 4 == 0, ErrorKind::Config,
        "stego nets need spatial dims divisible by 4");
  check(nbits % 8 == 0, ErrorKind::Config, "stego nets need nbits to be a multiple of 8");
  StegoNets nets;
  nets.nbits = nbits;
  nets.channels = channels;
  nets.height = height;
  nets.width = width;
  const int groups = secret_groups(nbits);

  for (int g = 0; g < groups; ++g)
    add_dense(nets.encoder, "proj" + std::to_string(g), 8, height * width, rng);
  add_conv(nets.encoder, "enc1", channels + groups, 8, 3, rng);
  add_conv(nets.encoder, "enc2", 8, 16, 3, rng);
  add_conv(nets.encoder, "enc3", 16 + 8, 8, 3, rng);
  add_conv(nets.encoder, "enc4", 8, channels, 3, rng);

  add_conv(nets.decoder, "dec1", channels, 8, 3, rng);
  add_conv(nets.decoder, "dec2", 8, 16, 3, rng);
  add_dense(nets.decoder, "dec3", 16 * (height / 4) * (width / 4), nbits, rng);

  add_conv(nets.critic, "cr1", channels, 8, 3, rng);
  add_conv(nets.critic, "cr2", 8, 16, 3, rng);
  add_dense(nets.critic, "cr3", 16, 1, rng);
  return nets;
}

Node* encoder_forward(Tape& tape, const StegoNets& nets, Node* images,
                      const std::vector<const SecretBits*>& secrets, bool params_need_grad) {
  const int B = images->value.dim(0);
  check(static_cast<int>(secrets.size()) == B, ErrorKind::Input,
        "encoder_forward: one secret per batch image required");
  check(images->value.dim(1) == nets.channels && images->value.dim(2) == nets.height &&
            images->value.dim(3) == nets.width,
        ErrorKind::Config, "encoder_forward: image shape " + images->value.shape_str() +
                               " does not match the encoder configuration");
  const int groups = secret_groups(nets.nbits);

  Node* x = images;
  for (int g = 0; g < groups; ++g) {
    Tensor group_bits({B, 8});
    for (int bi = 0; bi < B; ++bi)
      for (int k = 0; k < 8; ++k) {
        const int bit_idx = g * 8 + k;
        group_bits[static_cast<int64_t>(bi) * 8 + k] =
            bit_idx < nets.nbits ? static_cast<scalar_t>(secrets[static_cast<size_t>(bi)]->bits[static_cast<size_t>(bit_idx)])
                                 : 0.0;
      }
    Node* bits = tape.leaf(std::move(group_bits), false, "secret" + std::to_string(g));
    Node* plane = dense_block(tape, nets.encoder, "proj" + std::to_string(g), bits, params_need_grad);
    Node* plane4 = tape.reshape(plane, {B, 1, nets.height, nets.width});
    x = tape.concat_channels(x, plane4);
  }

  Node* e1 = tape.relu(conv_block(tape, nets.encoder, "enc1", x, params_need_grad));
  Node* p1 = tape.maxpool2(e1);
  Node* e2 = tape.relu(conv_block(tape, nets.encoder, "enc2", p1, params_need_grad));
  Node* u1 = tape.upsample2_nearest(e2);
  Node* cat = tape.concat_channels(u1, e1);
  Node* e3 = tape.relu(conv_block(tape, nets.encoder, "enc3", cat, params_need_grad));
  return conv_block(tape, nets.encoder, "enc4", e3, params_need_grad);
}

Node* decoder_forward(Tape& tape, const StegoNets& nets, Node* images, bool params_need_grad) {
  check(images->value.dim(1) == nets.channels && images->value.dim(2) == nets.height &&
            images->value.dim(3) == nets.width,
        ErrorKind::Input, "decoder_forward: image shape " + images->value.shape_str() +
                              " does not match the decoder configuration");
  Node* d1 = tape.relu(conv_block(tape, nets.decoder, "dec1", images, params_need_grad));
  Node* q1 = tape.maxpool2(d1);
  Node* d2 = tape.relu(conv_block(tape, nets.decoder, "dec2", q1, params_need_grad));
  Node* q2 = tape.maxpool2(d2);
  Node* fl = tape.flatten(q2);
  return dense_block(tape, nets.decoder, "dec3", fl, params_need_grad);
}

Node* critic_forward(Tape& tape, const StegoNets& nets, Node* images, bool params_need_grad) {
  Node* c1 = tape.relu(conv_block(tape, nets.critic, "cr1", images, params_need_grad));
  Node* r1 = tape.maxpool2(c1);
  Node* c2 = tape.relu(conv_block(tape, nets.critic, "cr2", r1, params_need_grad));
  Node* g = tape.global_avgpool(c2);
  return dense_block(tape, nets.critic, "cr3", g, params_need_grad);
}

Node* perceptual_loss_node(Tape& tape, Node* a, Node* b) {
  check(a->value.same_shape(b->value), ErrorKind::Input, "perceptual loss: shape mismatch");
  const int B = a->value.dim(0), C = a->value.dim(1);
  const int H = a->value.dim(2), W = a->value.dim(3);
  Node* xa = tape.reshape(a, {B * C, 1, H, W});
  Node* xb = tape.reshape(b, {B * C, 1, H, W});
  std::vector<std::pair<Node*, double>> terms;
  Node* zero_bias = tape.leaf(Tensor({1}), false);
  for (int scale = 0; scale < 3; ++scale) {
    if (scale > 0) {
      xa = tape.avgpool2(xa);
      xb = tape.avgpool2(xb);
    }
    for (const auto* kernel : {&kGauss, &kSobelX, &kSobelY}) {
      Node* w = tape.leaf(Tensor({1, 1, 3, 3}, *kernel), false);
      Node* ra = tape.conv2d(xa, w, zero_bias);
      Node* rb = tape.conv2d(xb, w, zero_bias);
      terms.push_back({tape.mse(ra, rb), 1.0});
    }
  }
  return tape.weighted_sum(terms);
}

Tensor encode_residual(const StegoNets& nets, const Tensor& image, const SecretBits& secret) {
  check(image.rank() == 3, ErrorKind::Input, "encode_residual: image must be [C,H,W]");
  Tape tape;
  Node* batch = tape.leaf(stack_batch({&image}), false);
  Node* residual = encoder_forward(tape, nets, batch, {&secret}, false);
  Tensor out({image.dim(0), image.dim(1), image.dim(2)});
  for (int64_t i = 0; i < out.size(); ++i) out[i] = residual->value[i];
  return out;
}

Tensor apply_trigger(const Tensor& image, const Tensor& residual) {
  check(image.same_shape(residual), ErrorKind::Input, "apply_trigger: shape mismatch");
  Tensor out(image.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::clamp(image[i] + residual[i], 0.0, 1.0);
  return out;
}

std::vector<double> decode_secret(const StegoNets& nets, const Tensor& image) {
  check(image.rank() == 3, ErrorKind::Input, "decode_secret: image must be [C,H,W]");
  Tape tape;
  Node* batch = tape.leaf(stack_batch({&image}), false);
  Node* logits = decoder_forward(tape, nets, batch, false);
  std::vector<double> out(static_cast<size_t>(nets.nbits));
  for (int i = 0; i < nets.nbits; ++i) out[static_cast<size_t>(i)] = logits->value[i];
  return out;
}

std::vector<uint8_t> bits_from_logits(const std::vector<double>& logits) {
  std::vector<uint8_t> bits(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    // sigmoid(z) > 0.5 iff z > 0; sigmoid(0) = 0.5 decodes as 0
    bits[i] = logits[i] > 0.0 ? 1 : 0;
  }
  return bits;
}

double loss_image(const Tensor& encoded, const Tensor& original) {
  check(encoded.same_shape(original), ErrorKind::Input, "loss_image: shape mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < encoded.size(); ++i) {
    const double d = encoded[i] - original[i];
    acc += d * d;
  }
  return acc / static_cast<double>(encoded.size());
}

double loss_secret(const std::vector<double>& logits, const SecretBits& secret) {
  check(logits.size() == secret.bits.size(), ErrorKind::Input, "loss_secret: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], t = secret.bits[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  return acc / static_cast<double>(logits.size());
}

double loss_perceptual(const Tensor& encoded, const Tensor& original) {
  Tape tape;
  Node* a = tape.leaf(stack_batch({&encoded}), false);
  Node* b = tape.leaf(stack_batch({&original}), false);
  return perceptual_loss_node(tape, a, b)->scalar64;
}

std::pair<double, double> loss_critic(const StegoNets& nets, const Tensor& real_batch,
                                      const Tensor& fake_batch) {
  check(real_batch.same_shape(fake_batch), ErrorKind::Input, "loss_critic: shape mismatch");
  auto mean_score = [&](const Tensor& batch) {
    Tape tape;
    Node* x = tape.leaf(batch, false);
    Node* s = critic_forward(tape, nets, x, false);
    double acc = 0.0;
    for (int64_t i = 0; i < s->value.size(); ++i) acc += s->value[i];
    return acc / static_cast<double>(s->value.size());
  };
  const double encoder_term = mean_score(real_batch) - mean_score(fake_batch);
  return {encoder_term, -encoder_term};
}

double joint_loss(double l_image, double l_perceptual, double l_secret, double encoder_term,
                  const StegoTrainConfig& cfg) {
  check(cfg.w1 >= 0 && cfg.w2 >= 0 && cfg.w3 >= 0 && cfg.w4 >= 0, ErrorKind::Config,
        "joint_loss: weights must be >= 0");
  return cfg.w1 * l_image + cfg.w2 * l_perceptual + cfg.w3 * l_secret + cfg.w4 * encoder_term;
}

StegoNets train_stego(const Dataset& train, const Dataset& heldout,
                      const std::vector<SecretBits>& class_secrets, const StegoTrainConfig& cfg,
                      StegoTrainStats* stats) {
  check(!train.empty(), ErrorKind::Input, "train_stego: empty dataset");
  check(!class_secrets.empty(), ErrorKind::Input, "train_stego: no class secrets");
  for (const auto& s : class_secrets)
    check(s.nbits == cfg.nbits, ErrorKind::Config, "train_stego: secret length != config nbits");

  Rng rng(stream_seed(cfg.seed, 0, 0, Stream::StegoTrain));
  StegoNets nets = init_stego_nets(train.channels(), train.height(), train.width(), cfg.nbits, rng);
  if (stats) *stats = StegoTrainStats{};
  AdamState enc_opt = adam_init(nets.encoder);
  AdamState dec_opt = adam_init(nets.decoder);
  AdamState cr_opt = adam_init(nets.critic);

  const int n = static_cast<int>(train.size());
  const int batch_size = std::min(cfg.batch, n);
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    const double ramp =
        cfg.ramp_epochs > 0 ? std::min(1.0, static_cast<double>(epoch + 1) / cfg.ramp_epochs) : 1.0;
    StegoEpochTrace row;
    row.epoch = epoch;
    int steps = 0;
    for (int start = 0; start + batch_size <= n; start += batch_size) {
      std::vector<const Tensor*> imgs;
      std::vector<const SecretBits*> secrets;
      for (int k = 0; k < batch_size; ++k) {
        const int idx = order[static_cast<size_t>(start + k)];
        imgs.push_back(&train.examples[static_cast<size_t>(idx)].pixels);
        secrets.push_back(&class_secrets[static_cast<size_t>(rng.below(class_secrets.size()))]);
      }
      Tensor images = stack_batch(imgs);

      // critic step on fixed encoder output
      {
        Tape enc_tape;
        Node* img_node = enc_tape.leaf(images, false);
        Node* res = encoder_forward(enc_tape, nets, img_node, secrets, false);
        Tensor fake(images.shape());
        for (int64_t i = 0; i < fake.size(); ++i) fake[i] = images[i] + res->value[i];

        Tape tape;
        Node* real_node = tape.leaf(images, false);
        Node* fake_node = tape.leaf(fake, false);
        Node* s_real = critic_forward(tape, nets, real_node, true);
        Node* s_fake = critic_forward(tape, nets, fake_node, true);
        // critic maximizes real - fake, so it descends fake - real
        Node* critic_obj = tape.weighted_sum(
            {{tape.mean_all(s_fake), 1.0}, {tape.mean_all(s_real), -1.0}});
        tape.backward(critic_obj);
        adam_step(nets.critic, tape.collect_gradients(nets.critic), cr_opt, cfg.lr_critic);
        for (size_t i = 0; i < nets.critic.size(); ++i) {
          Tensor& t = nets.critic.tensor_at(i);
          for (int64_t k = 0; k < t.size(); ++k)
            t[k] = std::clamp(t[k], -cfg.critic_clip, cfg.critic_clip);
        }
      }

      // encoder/decoder step on the joint loss
      {
        Tape tape;
        Node* img_node = tape.leaf(images, false);
        Node* res = encoder_forward(tape, nets, img_node, secrets, true);
        Node* encoded = tape.add(img_node, res);
        Node* l_img = tape.mse(encoded, img_node);
        Node* l_perc = perceptual_loss_node(tape, encoded, img_node);
        Node* logits = decoder_forward(tape, nets, encoded, true);
        std::vector<scalar_t> targets;
        targets.reserve(static_cast<size_t>(batch_size) * cfg.nbits);
        for (int k = 0; k < batch_size; ++k)
          for (int bidx = 0; bidx < cfg.nbits; ++bidx)
            targets.push_back(static_cast<scalar_t>(
                secrets[static_cast<size_t>(k)]->bits[static_cast<size_t>(bidx)]));
        Node* l_sec = tape.bce_with_logits(logits, targets);
        Node* s_real = critic_forward(tape, nets, img_node, false);
        Node* s_fake = critic_forward(tape, nets, encoded, false);
        Node* enc_term = tape.weighted_sum(
            {{tape.mean_all(s_real), 1.0}, {tape.mean_all(s_fake), -1.0}});
        Node* joint = tape.weighted_sum({{l_img, ramp * cfg.w1},
                                         {l_perc, ramp * cfg.w2},
                                         {l_sec, cfg.w3},
                                         {enc_term, ramp * cfg.w4}});
        check(std::isfinite(joint->scalar64), ErrorKind::Training,
              "stego training diverged (joint loss is not finite) at epoch " +
                  std::to_string(epoch));
        tape.backward(joint);
        adam_step(nets.encoder, tape.collect_gradients(nets.encoder), enc_opt, cfg.lr_encoder);
        adam_step(nets.decoder, tape.collect_gradients(nets.decoder), dec_opt, cfg.lr_encoder);

        row.loss_image += l_img->scalar64;
        row.loss_perceptual += l_perc->scalar64;
        row.loss_secret += l_sec->scalar64;
        row.loss_critic += enc_term->scalar64;
        row.joint += joint->scalar64;
      }
      ++steps;
    }
    if (steps > 0) {
      row.loss_image /= steps;
      row.loss_perceptual /= steps;
      row.loss_secret /= steps;
      row.loss_critic /= steps;
      row.joint /= steps;
    }
    if (stats) stats->trace.push_back(row);
  }

  if (stats && !heldout.empty()) {
    int64_t bit_hits = 0, bit_total = 0;
    double img_loss = 0.0;
    for (size_t i = 0; i < heldout.size(); ++i) {
      const auto& ex = heldout.examples[i];
      const SecretBits& secret = class_secrets[i % class_secrets.size()];
      Tensor res = encode_residual(nets, ex.pixels, secret);
      Tensor trig = apply_trigger(ex.pixels, res);
      const std::vector<uint8_t> bits = bits_from_logits(decode_secret(nets, trig));
      for (int k = 0; k < cfg.nbits; ++k) {
        bit_hits += bits[static_cast<size_t>(k)] == secret.bits[static_cast<size_t>(k)] ? 1 : 0;
        ++bit_total;
      }
      img_loss += loss_image(trig, ex.pixels);
    }
    stats->heldout_bit_accuracy = static_cast<double>(bit_hits) / static_cast<double>(bit_total);
    stats->heldout_loss_image = img_loss / static_cast<double>(heldout.size());
  }
  return nets;
}

Tensor badnets_trigger(const Tensor& image) {
  check(image.rank() == 3, ErrorKind::Input, "badnets_trigger: image must be [C,H,W]");
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  check(H >= 8 && W >= 8, ErrorKind::Input, "badnets_trigger: image smaller than the block");
  Tensor out = image;
  if (C == 1) {
    // mosaic: 4x4 checkerboard in the bottom-right corner, white at its top-left
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        out[(static_cast<int64_t>(H - 4 + i)) * W + (W - 4 + j)] = ((i + j) % 2 == 0) ? 1.0 : 0.0;
    return out;
  }
  // white 5x5 block with a centered one-pixel-wide black cross (block row 2
  // and column 2)
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const bool cross = (i == 2) || (j == 2);
        out[(static_cast<int64_t>(c) * H + (H - 5 + i)) * W + (W - 5 + j)] = cross ? 0.0 : 1.0;
      }
  return out;
}

Tensor dba_trigger(const Tensor& image, int part) {
  check(image.rank() == 3, ErrorKind::Input, "dba_trigger: image must be [C,H,W]");
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  check(H >= 6 && W >= 6, ErrorKind::Input, "dba_trigger: image too small for the trigger layout");
  check(part == kDbaAllParts || (part >= 0 && part <= 3), ErrorKind::Input,
        "dba_trigger: part index out of range");
  // 1x2 blocks at rows {0,2} x column pairs {(0,1),(3,4)}; >=1 pixel spacing
  static const int kRow[4] = {0, 0, 2, 2};
  static const int kCol[4] = {0, 3, 0, 3};
  // RGB fills red, green, blue, yellow; grayscale fills spaced by 45/255
  static const double kRgb[4][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}};
  static const double kGray[4] = {40 / 255.0, 85 / 255.0, 130 / 255.0, 175 / 255.0};

  Tensor out = image;
  for (int p = 0; p < 4; ++p) {
    if (part != kDbaAllParts && part != p) continue;
    for (int j = 0; j < 2; ++j) {
      const int y = kRow[p], x = kCol[p] + j;
      if (C == 1) {
        out[static_cast<int64_t>(y) * W + x] = kGray[p];
      } else {
        for (int c = 0; c < C; ++c)
          out[(static_cast<int64_t>(c) * H + y) * W + x] = kRgb[p][c];
      }
    }
  }
  return out;
}

std::pair<PoisonedDataset, PoisonedDataset> build_poison_dataset(const Dataset& ds,
                                                                 const TriggerFn& trigger,
                                                                 int target_class, double fraction,
                                                                 uint64_t seed) {
  check(!ds.empty(), ErrorKind::Input, "build_poison_dataset: empty dataset");
  check(fraction > 0.0 && fraction <= 1.0, ErrorKind::Input,
        "build_poison_dataset: fraction must lie in (0,1]");
  check(target_class >= 0 && target_class < ds.num_classes, ErrorKind::Input,
        "build_poison_dataset: target class out of range");

  const int n = static_cast<int>(ds.size());
  int count = static_cast<int>(std::llround(fraction * n));
  count = std::clamp(count, 1, n);
  Rng rng(stream_seed(seed, 0, 0, Stream::Poison));
  std::vector<int> chosen = rng.sample_without_replacement(n, count);
  std::vector<uint8_t> is_chosen(static_cast<size_t>(n), 0);
  for (int idx : chosen) is_chosen[static_cast<size_t>(idx)] = 1;

  PoisonedDataset train_side;
  train_side.target_class = target_class;
  train_side.data.name = ds.name + "+poison";
  train_side.data.num_classes = ds.num_classes;
  for (int i = 0; i < n; ++i) {
    const auto& ex = ds.examples[static_cast<size_t>(i)];
    train_side.original_labels.push_back(ex.label);
    if (is_chosen[static_cast<size_t>(i)])
      train_side.data.examples.push_back({trigger(ex.pixels), target_class});
    else
      train_side.data.examples.push_back(ex);
  }

  PoisonedDataset test_side;
  test_side.target_class = target_class;
  test_side.data.name = ds.name + "+poison-test";
  test_side.data.num_classes = ds.num_classes;
  for (int i = 0; i < n; ++i) {
    const auto& ex = ds.examples[static_cast<size_t>(i)];
    if (ex.label == target_class) continue;  // ASR convention
    test_side.original_labels.push_back(ex.label);
    test_side.data.examples.push_back({trigger(ex.pixels), target_class});
  }
  return {std::move(train_side), std::move(test_side)};
}

}  // namespace fedsab
