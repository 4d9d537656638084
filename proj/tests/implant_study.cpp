// Scratch study: can a fresh small-cnn learn the stego residual trigger at
// all under centralized training on a poisoned dataset? Separates trigger
// learnability from federated dilution effects.
#include <cstdio>

#include "fl.hpp"
#include "metrics.hpp"
#include "runner.hpp"
#include "stego.hpp"

using namespace fedsab;

int main(int argc, char** argv) {
  const double poison_fraction = argc > 1 ? std::atof(argv[1]) : 0.5;
  const double lr = argc > 2 ? std::atof(argv[2]) : 0.05;
  const int epochs = argc > 3 ? std::atoi(argv[3]) : 6;
  const int stego_epochs = argc > 4 ? std::atoi(argv[4]) : 18;

  ExperimentConfig cfg;
  cfg.dataset.kind = "synth";
  cfg.dataset.name = "desk-synth";
  cfg.stego.epochs = stego_epochs;
  cfg.stego.lr_encoder = 0.002;
  cfg.stego.lr_critic = 0.002;
  auto [train, test] = resolve_datasets(cfg);

  Dataset st, sh;
  st.name = sh.name = train.name;
  st.num_classes = sh.num_classes = train.num_classes;
  for (int i = 0; i < 400; ++i) st.examples.push_back(train.examples[i]);
  for (int i = 400; i < 500; ++i) sh.examples.push_back(train.examples[i]);
  auto secrets = class_secrets_of(cfg, 10);
  StegoTrainStats stats;
  StegoNets nets = train_stego(st, sh, secrets, stego_train_config_of(cfg), &stats);
  std::printf("stego: bit_acc=%.3f img=%.5f\n", stats.heldout_bit_accuracy,
              stats.heldout_loss_image);

  TriggerFn trig = [&](const Tensor& img) {
    return apply_trigger(img, encode_residual(nets, img, secrets[0]));
  };
  auto [ptrain, ptest_unused] = build_poison_dataset(train, trig, 0, poison_fraction, 7);
  auto [ptr_unused, ptest] = build_poison_dataset(test, trig, 0, 1.0, 7);

  const Architecture arch = make_small_cnn(1, 28, 28, 10);
  Rng rng(123);
  ParamSet params = init_params(arch, rng);
  Rng order_rng(5);
  std::vector<int> order(ptrain.data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int e = 0; e < epochs; ++e) {
    order_rng.shuffle(order);
    for (size_t s = 0; s < order.size(); s += 16) {
      const size_t eidx = std::min(order.size(), s + 16);
      std::vector<const Tensor*> imgs;
      std::vector<int> labels;
      for (size_t k = s; k < eidx; ++k) {
        imgs.push_back(&ptrain.data.examples[order[k]].pixels);
        labels.push_back(ptrain.data.examples[order[k]].label);
      }
      ParamSet grads = compute_gradients(arch, params, stack_batch(imgs), labels);
      sgd_update(params, grads, lr);
    }
    std::printf("epoch %d: BA=%.3f ASR=%.3f\n", e, benign_accuracy(arch, params, test),
                attack_success_rate(arch, params, ptest.data, 0));
  }
  return 0;
}
