#include "fl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "metrics.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace fedsab {

namespace {

constexpr uint64_t kServerDropPurpose = 100;

Dataset slice_dataset(const Dataset& ds, const std::vector<int>& indices) {
  Dataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.examples.reserve(indices.size());
  for (int i : indices) out.examples.push_back(ds.examples[static_cast<size_t>(i)]);
  return out;
}

std::vector<int> adversary_ids_of(const AttackConfig& attack) {
  std::vector<int> ids;
  if (attack.kind == AttackKind::None) return ids;
  for (int i = 0; i < attack.num_adversaries; ++i) ids.push_back(i);
  return ids;
}

double client_mean_loss(const Architecture& arch, const ParamSet& params, const Dataset& shard) {
  double acc = 0.0;
  const int n = static_cast<int>(shard.size());
  const int bs = 64;
  for (int start = 0; start < n; start += bs) {
    const int b = std::min(bs, n - start);
    std::vector<const Tensor*> imgs;
    std::vector<int> labels;
    for (int k = 0; k < b; ++k) {
      imgs.push_back(&shard.examples[static_cast<size_t>(start + k)].pixels);
      labels.push_back(shard.examples[static_cast<size_t>(start + k)].label);
    }
    acc += eval_loss(arch, params, stack_batch(imgs), labels) * b;
  }
  return acc / n;
}

}  // namespace

double lr_schedule(double eta0, double decay, int t) {
  check(decay >= 0.0, ErrorKind::Config, "lr_schedule: decay must be >= 0");
  return eta0 / (1.0 + decay * static_cast<double>(t));
}

std::vector<int> select_clients(int pool_size, int m, uint64_t seed_stream, bool attack_round,
                                const std::vector<int>& adversary_ids) {
  check(m >= 1 && m <= pool_size, ErrorKind::Config,
        "select_clients: clients per round must lie in [1, pool]");
  Rng rng(seed_stream);
  std::vector<int> selected = rng.sample_without_replacement(pool_size, m);
  if (attack_round) {
    // force-include every adversary, replacing tail picks
    int replace_pos = m - 1;
    for (int adv : adversary_ids) {
      if (std::find(selected.begin(), selected.end(), adv) != selected.end()) continue;
      while (replace_pos >= 0 &&
             std::find(adversary_ids.begin(), adversary_ids.end(), selected[static_cast<size_t>(replace_pos)]) !=
                 adversary_ids.end())
        --replace_pos;
      check(replace_pos >= 0, ErrorKind::Config,
            "select_clients: more adversaries than selection slots");
      selected[static_cast<size_t>(replace_pos--)] = adv;
    }
  }
  return selected;
}

UpdateUpload local_train_benign(const Architecture& arch, const GlobalModel& global,
                                const ClientState& client, const Dataset& train,
                                const RoundConfig& cfg, int round, uint64_t experiment_seed) {
  check(!client.data_indices.empty(), ErrorKind::Input, "local_train_benign: client has no data");
  ParamSet local;
  for (size_t i = 0; i < global.params.size(); ++i)
    local.add(global.params.name_at(i), global.params.tensor_at(i));

  const double lr = lr_schedule(cfg.benign_lr, cfg.benign_decay, round);
  Rng rng(stream_seed(experiment_seed, static_cast<uint64_t>(round),
                      static_cast<uint64_t>(client.id), Stream::LocalShuffle));
  std::vector<int> order = client.data_indices;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const Tensor*> imgs;
      std::vector<int> labels;
      for (size_t k = start; k < end; ++k) {
        const auto& ex = train.examples[static_cast<size_t>(order[k])];
        imgs.push_back(&ex.pixels);
        labels.push_back(ex.label);
      }
      ParamSet grads = compute_gradients(arch, local, stack_batch(imgs), labels);
      sgd_update(local, grads, lr);
    }
  }

  UpdateUpload up;
  up.delta = param_diff(local, global.params);
  up.sample_count = static_cast<int64_t>(client.data_indices.size());
  up.client_id = client.id;
  return up;
}

void fedavg_aggregate(GlobalModel& global, const std::vector<UpdateUpload>& uploads, double eta,
                      bool weighted_by_samples) {
  check(!uploads.empty(), ErrorKind::Input, "fedavg_aggregate: no uploads");
  int64_t total_samples = 0;
  for (const auto& up : uploads) {
    check(up.delta.conformant_with(global.params), ErrorKind::Protocol,
          "fedavg_aggregate: non-conformant upload from client " + std::to_string(up.client_id));
    total_samples += up.sample_count;
  }
  if (weighted_by_samples) {
    check(total_samples > 0, ErrorKind::Protocol, "fedavg_aggregate: zero total sample count");
    for (const auto& up : uploads)
      param_axpy(global.params, up.delta,
                 eta * static_cast<double>(up.sample_count) / static_cast<double>(total_samples));
  } else {
    const double scale = eta / static_cast<double>(uploads.size());
    for (const auto& up : uploads) param_axpy(global.params, up.delta, scale);
  }
  global.round_index += 1;
}

double fedsgd_objective(const std::vector<int64_t>& sample_counts,
                        const std::vector<double>& mean_losses) {
  check(sample_counts.size() == mean_losses.size() && !sample_counts.empty(), ErrorKind::Input,
        "fedsgd_objective: count/loss length mismatch");
  int64_t n = 0;
  for (int64_t c : sample_counts) n += c;
  check(n > 0, ErrorKind::Input, "fedsgd_objective: no samples");
  double acc = 0.0;
  for (size_t i = 0; i < sample_counts.size(); ++i)
    acc += static_cast<double>(sample_counts[i]) / static_cast<double>(n) * mean_losses[i];
  return acc;
}

bool attack_round_active(const ExperimentEnv& env, int round) {
  if (env.attack.kind == AttackKind::None || env.attack.duration <= 0) return false;
  return round >= env.attack.start && round < env.attack.start + env.attack.duration;
}

TriggerFn make_trigger(const ExperimentEnv& env, int dba_part) {
  switch (env.attack.kind) {
    case AttackKind::Sab: {
      check(env.stego && env.target_secret, ErrorKind::Config,
            "SAB trigger requested without trained stego nets");
      const StegoNets* nets = env.stego;
      const SecretBits* secret = env.target_secret;
      return [nets, secret](const Tensor& img) {
        return apply_trigger(img, encode_residual(*nets, img, *secret));
      };
    }
    case AttackKind::BadNets:
      return [](const Tensor& img) { return badnets_trigger(img); };
    case AttackKind::Dba:
      return [dba_part](const Tensor& img) { return dba_trigger(img, dba_part); };
    case AttackKind::None:
      break;
  }
  fail(ErrorKind::Config, "make_trigger: no attack configured");
  return {};
}

RoundReport run_round(GlobalModel& global, const ExperimentEnv& env, int round) {
  const bool attacking = attack_round_active(env, round);
  const std::vector<int> adversaries = adversary_ids_of(env.attack);
  const std::vector<int> selected =
      select_clients(static_cast<int>(env.partition.assignments.size()), env.round_cfg.clients_per_round,
                     stream_seed(env.seed, static_cast<uint64_t>(round), 0, Stream::ClientSelect),
                     attacking, adversaries);

  std::vector<std::optional<UpdateUpload>> slots(selected.size());
  std::vector<double> losses(selected.size(), 0.0);
  std::vector<int64_t> counts(selected.size(), 0);

  parallel_for(static_cast<int64_t>(selected.size()), [&](int64_t si) {
    const int cid = selected[static_cast<size_t>(si)];
    const auto& indices = env.partition.assignments[static_cast<size_t>(cid)];
    if (indices.empty()) {
      std::fprintf(stderr, "[fedsab] round %d: client %d has no samples, skipping\n", round, cid);
      return;
    }
    ClientState client{cid, indices,
                       std::find(adversaries.begin(), adversaries.end(), cid) != adversaries.end()};
    const Dataset shard = slice_dataset(*env.train, indices);
    losses[static_cast<size_t>(si)] = client_mean_loss(env.arch, global.params, shard);
    counts[static_cast<size_t>(si)] = static_cast<int64_t>(shard.size());

    if (client.is_adversary && attacking) {
      const int ordinal =
          static_cast<int>(std::find(adversaries.begin(), adversaries.end(), cid) - adversaries.begin());
      int dba_part = kDbaAllParts;
      if (env.attack.kind == AttackKind::Dba) dba_part = dba_part_for(ordinal, round);
      const Dataset& attack_base =
          env.adversary_data && !env.adversary_data->empty() ? *env.adversary_data : shard;
      auto [poison_train, poison_test_unused] =
          build_poison_dataset(attack_base, make_trigger(env, dba_part), env.attack.target_class,
                               env.attack.poison_fraction,
                               stream_seed(env.seed, static_cast<uint64_t>(round),
                                           static_cast<uint64_t>(cid), Stream::Poison));
      const double lr =
          lr_schedule(env.attack.poison_lr, env.attack.poison_decay, round - env.attack.start);
      const int adv_epochs = env.attack.adversary_epochs > 0 ? env.attack.adversary_epochs
                                                             : env.round_cfg.local_epochs;
      AdversaryUpdate adv = adversary_local_train(
          env.arch, global.params, poison_train.data, env.attack, lr, adv_epochs,
          env.round_cfg.batch_size,
          stream_seed(env.seed, static_cast<uint64_t>(round), static_cast<uint64_t>(cid),
                      Stream::LocalShuffle),
          stream_seed(env.seed, static_cast<uint64_t>(round), static_cast<uint64_t>(cid),
                      Stream::SparseMask));
      UpdateUpload up;
      up.delta = std::move(adv.delta);
      up.sample_count = adv.sample_count;
      up.mask_bottom95 = adv.applied_bottom95;
      up.mask_sparse = adv.applied_sparse;
      up.mask_report = std::move(adv.report);
      up.client_id = cid;
      slots[static_cast<size_t>(si)] = std::move(up);
    } else {
      slots[static_cast<size_t>(si)] =
          local_train_benign(env.arch, global, client, *env.train, env.round_cfg, round, env.seed);
    }
  });

  std::vector<UpdateUpload> uploads;
  std::vector<int64_t> up_counts;
  std::vector<double> up_losses;
  for (size_t si = 0; si < slots.size(); ++si) {
    if (!slots[si]) continue;
    uploads.push_back(std::move(*slots[si]));
    up_counts.push_back(counts[si]);
    up_losses.push_back(losses[si]);
  }

  // server-side defenses on the uploads
  if (env.defenses.partfedavg_drop > 0.0) {
    for (auto& up : uploads)
      up.delta = sparse_update_mask(
          up.delta, env.defenses.partfedavg_drop,
          stream_seed(env.seed, static_cast<uint64_t>(round), static_cast<uint64_t>(up.client_id),
                      static_cast<Stream>(kServerDropPurpose)),
          &up.mask_report);
  }
  if (env.defenses.dp_enabled && !env.defenses.dp_post_aggregation) {
    for (auto& up : uploads)
      up.delta = dp_noise(up.delta, env.defenses.dp,
                          stream_seed(env.seed, static_cast<uint64_t>(round),
                                      static_cast<uint64_t>(up.client_id), Stream::DpNoise));
  }

  if (!uploads.empty()) {
    fedavg_aggregate(global, uploads, env.round_cfg.server_eta, env.round_cfg.weighted_by_samples);
  } else {
    global.round_index += 1;
  }
  if (env.defenses.dp_enabled && env.defenses.dp_post_aggregation) {
    ParamSet noise = dp_noise(global.params.clone_zeroed(), env.defenses.dp,
                              stream_seed(env.seed, static_cast<uint64_t>(round), 0, Stream::DpNoise));
    param_axpy(global.params, noise, 1.0);
  }

  RoundReport rep;
  rep.round = round;
  if (env.attack.kind == AttackKind::None || env.attack.duration <= 0)
    rep.phase = "clean";
  else if (round < env.attack.start)
    rep.phase = "clean";
  else if (attacking)
    rep.phase = "attack";
  else
    rep.phase = "post";
  rep.selected = static_cast<int>(selected.size());
  rep.ba = benign_accuracy(env.arch, global.params, *env.test);
  if (env.attack.kind != AttackKind::None && env.poisoned_test && !env.poisoned_test->empty())
    rep.asr = attack_success_rate(env.arch, global.params, *env.poisoned_test,
                                  env.attack.target_class);
  if (env.clean_ba && rep.round < static_cast<int>(env.clean_ba->size()))
    rep.tal = (*env.clean_ba)[static_cast<size_t>(rep.round)] - rep.ba;
  if (!up_counts.empty()) rep.benign_loss = fedsgd_objective(up_counts, up_losses);
  for (const auto& up : uploads) {
    rep.zeroed_top += up.mask_report.total_top();
    rep.zeroed_sparse += up.mask_report.total_sparse();
  }
  return rep;
}

std::vector<RoundReport> run_experiment(const ExperimentEnv& env,
                                        const std::function<void(const RoundReport&)>& on_round,
                                        GlobalModel* final_model) {
  check(env.train && env.test && !env.train->empty() && !env.test->empty(), ErrorKind::Config,
        "run_experiment: datasets not set");
  check(env.rounds >= 1, ErrorKind::Config, "run_experiment: rounds must be >= 1");
  if (env.attack.kind != AttackKind::None)
    check(env.attack.start + env.attack.duration <= env.rounds, ErrorKind::Config,
          "run_experiment: attack window exceeds the round budget");

  GlobalModel global;
  Rng init_rng(stream_seed(env.seed, 0, 0, Stream::ParamInit));
  global.params = init_params(env.arch, init_rng);

  std::vector<RoundReport> reports;
  reports.reserve(static_cast<size_t>(env.rounds));
  for (int round = 0; round < env.rounds; ++round) {
    RoundReport rep = run_round(global, env, round);
    if (on_round) on_round(rep);
    reports.push_back(std::move(rep));
  }
  if (final_model) *final_model = std::move(global);
  return reports;
}

}  // namespace fedsab
