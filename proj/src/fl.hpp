#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attack.hpp"
#include "data.hpp"
#include "defense.hpp"
#include "nn.hpp"
#include "stego.hpp"

namespace fedsab {

struct RoundConfig {
  int clients_per_round = 5;  // m
  double server_eta = 1.0;
  int local_epochs = 1;  // E
  int batch_size = 16;   // B
  double benign_lr = 0.05;
  double benign_decay = 0.0;
  bool weighted_by_samples = false;  // Eq-(1)-style n_k/n weighting
};

struct ClientState {
  int id = 0;
  std::vector<int> data_indices;
  bool is_adversary = false;
};

struct UpdateUpload {
  ParamSet delta;  // local params minus global params
  int64_t sample_count = 0;
  bool mask_bottom95 = false;
  bool mask_sparse = false;
  MaskReport mask_report;
  int client_id = -1;
};

struct GlobalModel {
  ParamSet params;
  int round_index = 0;
};

struct DefensePlan {
  bool dp_enabled = false;
  DpConfig dp;
  bool dp_post_aggregation = false;  // default site is per-upload, pre-aggregation
  double partfedavg_drop = 0.0;      // server-side sparse drop on every upload
};

// eta_t = eta0 / (1 + decay * t)
double lr_schedule(double eta0, double decay, int t);

// m distinct clients, uniform without replacement. During attack rounds every
// adversary id is force-included (replacing tail picks).
std::vector<int> select_clients(int pool_size, int m, uint64_t seed_stream, bool attack_round,
                                const std::vector<int>& adversary_ids);

UpdateUpload local_train_benign(const Architecture& arch, const GlobalModel& global,
                                const ClientState& client, const Dataset& train,
                                const RoundConfig& cfg, int round, uint64_t experiment_seed);

// w <- w + (eta/m) * sum(delta)  (or n_k/n weighted); bumps round_index.
void fedavg_aggregate(GlobalModel& global, const std::vector<UpdateUpload>& uploads, double eta,
                      bool weighted_by_samples);

// sum_k (n_k / n) * F_k
double fedsgd_objective(const std::vector<int64_t>& sample_counts,
                        const std::vector<double>& mean_losses);

struct RoundReport {
  int round = 0;
  std::string phase;  // clean | attack | post
  double ba = 0.0;
  std::optional<double> asr;
  std::optional<double> tal;
  double benign_loss = 0.0;
  int64_t zeroed_top = 0;
  int64_t zeroed_sparse = 0;
  int selected = 0;
};

// Everything fixed across an experiment. The poisoned artifacts are prepared
// by the runner (stego training happens before any round runs).
struct ExperimentEnv {
  Architecture arch;
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  PartitionPlan partition;
  RoundConfig round_cfg;
  AttackConfig attack;
  DefensePlan defenses;
  int rounds = 0;  // total rounds E_e; attack active on [start, start+duration)
  uint64_t seed = 0;
  const StegoNets* stego = nullptr;       // SAB only
  const SecretBits* target_secret = nullptr;
  const Dataset* adversary_data = nullptr; // attacker-held slice backing its poisoned set
  const Dataset* poisoned_test = nullptr; // ASR evaluation set (ALL-parts for DBA)
  const std::vector<double>* clean_ba = nullptr;  // same-seed clean run, for TAL
};

bool attack_round_active(const ExperimentEnv& env, int round);
TriggerFn make_trigger(const ExperimentEnv& env, int dba_part);

RoundReport run_round(GlobalModel& global, const ExperimentEnv& env, int round);

// Rounds 0..rounds-1 from a seeded fresh model; reports in order, optionally
// streamed to on_round as they finish.
std::vector<RoundReport> run_experiment(const ExperimentEnv& env,
                                        const std::function<void(const RoundReport&)>& on_round = {},
                                        GlobalModel* final_model = nullptr);

}  // namespace fedsab
