// Scratch study: where does the SAB implant chain break at desk scale?
// Stages: adversary-local model, post-aggregation model, after benign rounds.
#include <cstdio>

#include "fl.hpp"
#include "metrics.hpp"
#include "runner.hpp"

using namespace fedsab;

int main(int argc, char** argv) {
  ExperimentConfig cfg = config_load(argc > 1 ? argv[1] : "configs/desk_sab.json");
  cfg.stego.artifacts_dir = argc > 2 ? argv[2] : "/tmp/desk_sab_cal";
  if (argc > 3) cfg.attack.poison_lr = std::atof(argv[3]);
  if (argc > 4) cfg.local_epochs = std::atoi(argv[4]);
  if (argc > 5) cfg.benign_lr = std::atof(argv[5]);
  if (argc > 6) cfg.attack.poison_fraction = std::atof(argv[6]);
  const bool masks = argc > 7 ? std::atoi(argv[7]) != 0 : true;
  cfg.attack.mask_bottom95 = masks;
  cfg.attack.mask_sparse = masks;
  if (argc > 8) cfg.attack.adversary_epochs = std::atoi(argv[8]);
  if (argc > 9) cfg.attack.data_count = std::atoi(argv[9]);

  auto [train, test] = resolve_datasets(cfg);
  const Architecture arch =
      build_model(cfg.model, train.channels(), train.height(), train.width(), train.num_classes);
  const PartitionPlan partition = dirichlet_partition(train, cfg.pool_size, cfg.alpha, cfg.seed);
  StegoNets stego;
  {
    RunArtifacts art = load_run(cfg.stego.artifacts_dir);
    stego = std::move(art.stego);
  }
  auto secrets = class_secrets_of(cfg, train.num_classes);
  const SecretBits& target_secret = secrets[cfg.attack.target_class];

  TriggerFn trig = [&](const Tensor& img) {
    return apply_trigger(img, encode_residual(stego, img, target_secret));
  };
  auto [pt_unused, ptest] = build_poison_dataset(test, trig, cfg.attack.target_class, 1.0, cfg.seed);

  Dataset adversary_slice;
  adversary_slice.name = train.name;
  adversary_slice.num_classes = train.num_classes;
  for (int i = 0; i < std::min<int>(cfg.attack.data_count, (int)train.size()); ++i)
    adversary_slice.examples.push_back(train.examples[static_cast<size_t>(i)]);

  ExperimentEnv env;
  env.arch = arch;
  env.train = &train;
  env.test = &test;
  env.partition = partition;
  env.round_cfg = round_config_of(cfg);
  env.attack = cfg.attack;
  env.rounds = cfg.rounds;
  env.seed = cfg.seed;
  env.stego = &stego;
  env.target_secret = &target_secret;
  env.poisoned_test = &ptest.data;
  env.adversary_data = adversary_slice.empty() ? nullptr : &adversary_slice;

  // 20 clean warmup rounds
  GlobalModel global;
  Rng init_rng(stream_seed(cfg.seed, 0, 0, Stream::ParamInit));
  global.params = init_params(arch, init_rng);
  ExperimentEnv clean_env = env;
  clean_env.attack = AttackConfig{};
  for (int r = 0; r < cfg.attack.start; ++r) run_round(global, clean_env, r);
  std::printf("after warmup: BA=%.3f ASR=%.3f\n", benign_accuracy(arch, global.params, test),
              attack_success_rate(arch, global.params, ptest.data, cfg.attack.target_class));

  // one adversary local training seen in isolation
  const auto& shard_idx = partition.assignments[0];
  Dataset shard;
  shard.name = train.name;
  shard.num_classes = train.num_classes;
  for (int i : shard_idx) shard.examples.push_back(train.examples[static_cast<size_t>(i)]);
  const Dataset& attack_base = adversary_slice.empty() ? shard : adversary_slice;
  auto [pshard, pside_unused] = build_poison_dataset(
      attack_base, trig, cfg.attack.target_class, cfg.attack.poison_fraction,
      stream_seed(cfg.seed, cfg.attack.start, 0, Stream::Poison));
  const int adv_epochs =
      cfg.attack.adversary_epochs > 0 ? cfg.attack.adversary_epochs : cfg.local_epochs;
  AdversaryUpdate adv = adversary_local_train(
      arch, global.params, pshard.data, cfg.attack, cfg.attack.poison_lr, adv_epochs,
      cfg.batch_size, stream_seed(cfg.seed, cfg.attack.start, 0, Stream::LocalShuffle),
      stream_seed(cfg.seed, cfg.attack.start, 0, Stream::SparseMask));
  ParamSet local = global.params;
  param_axpy(local, adv.delta, 1.0);
  std::printf("adversary local (shard=%zu): BA=%.3f ASR=%.3f\n", shard.size(),
              benign_accuracy(arch, local, test),
              attack_success_rate(arch, local, ptest.data, cfg.attack.target_class));
  ParamSet diluted = global.params;
  param_axpy(diluted, adv.delta, 1.0 / 5.0);
  std::printf("after 1/5 dilution: BA=%.3f ASR=%.3f\n", benign_accuracy(arch, diluted, test),
              attack_success_rate(arch, diluted, ptest.data, cfg.attack.target_class));

  // full attack window then a few post rounds
  for (int r = cfg.attack.start; r < cfg.attack.start + cfg.attack.duration; ++r) {
    RoundReport rep = run_round(global, env, r);
    if ((r - cfg.attack.start) % 5 == 0 || r == cfg.attack.start + cfg.attack.duration - 1)
      std::printf("attack round %d: BA=%.3f ASR=%.3f\n", r, rep.ba, rep.asr.value_or(-1));
  }
  for (int r = cfg.attack.start + cfg.attack.duration; r < cfg.rounds; ++r) {
    RoundReport rep = run_round(global, env, r);
    if (r % 5 == 0 || r == cfg.rounds - 1)
      std::printf("post round %d: BA=%.3f ASR=%.3f\n", r, rep.ba, rep.asr.value_or(-1));
  }
  return 0;
}
