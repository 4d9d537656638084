#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attack.hpp"
#include "defense.hpp"
#include "fl.hpp"
#include "stego.hpp"

namespace fedsab {

struct DatasetConfig {
  std::string kind = "synth";  // synth | idx | cifar
  std::string name = "synth";
  std::string images, labels, test_images, test_labels;     // idx
  std::vector<std::string> train_batches, test_batches;     // cifar
  int synth_train = 2000;
  int synth_test = 500;
  int synth_classes = 10;
  std::array<int, 3> synth_shape = {1, 28, 28};
  bool desk_subset = false;  // cap at the desk-scale per-class sizes below
  int desk_train_per_class = 200;
  int desk_test_per_class = 50;
};

struct StegoSection {
  int nbits = 32;
  std::array<double, 4> weights = {2.0, 1.0, 1.5, 0.5};
  int epochs = 30;
  int batch = 16;
  int ramp_epochs = 8;
  double lr_encoder = 0.02;
  double lr_critic = 0.02;
  double critic_clip = 0.01;
  int train_count = 400;
  int heldout_count = 100;
  std::string artifacts_dir;  // load pretrained artifacts instead of training
};

struct DefenseSection {
  bool dp_enabled = false;
  double dp_mean = 1e-6;
  double dp_sigma = 1e-3;
  bool dp_post_aggregation = false;
  double partfedavg_drop = 0.0;
  StripConfig strip;
};

struct ExperimentConfig {
  std::string name = "run";
  uint64_t seed = 42;
  std::string output;  // default output directory (relative to cwd)
  DatasetConfig dataset;
  std::string model = "small-cnn";
  int pool_size = 20;
  int clients_per_round = 5;
  int rounds = 60;
  double alpha = 0.9;  // Dirichlet concentration
  double server_eta = 1.0;
  bool weighted_by_samples = false;
  double benign_lr = 0.05;
  double benign_decay = 0.0;
  int local_epochs = 1;
  int batch_size = 16;
  AttackConfig attack;
  DefenseSection defenses;
  StegoSection stego;
  bool compute_tal = true;
  bool asr_include_target = false;
  int snapshot_every = 0;  // 0 = final snapshot only

  std::string base_dir;  // directory of the config file; resolves relative paths
};

// Strict parse: unknown keys are errors, the schema is validated, and the
// attack window must fit the round budget.
ExperimentConfig config_from_json_text(const std::string& text, const std::string& base_dir);
ExperimentConfig config_load(const std::string& path);

// Applies a small override object (same schema subset: seed, output,
// dataset.desk_subset, ...). Unknown keys are errors.
void config_apply_overrides(ExperimentConfig& cfg, const std::string& overrides_json);

// Canonical form: every field materialized, keys sorted, stable number
// formatting. parse(canonical(x)) == x.
std::string config_canonical_json(const ExperimentConfig& cfg);

// FNV-1a 64 over the canonical form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::string resolve_path(const ExperimentConfig& cfg, const std::string& path);

RoundConfig round_config_of(const ExperimentConfig& cfg);
DefensePlan defense_plan_of(const ExperimentConfig& cfg);
StegoTrainConfig stego_train_config_of(const ExperimentConfig& cfg);

}  // namespace fedsab
