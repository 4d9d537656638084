#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "util.hpp"

namespace fedsab {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  check(obj.is_object(), ErrorKind::Config, "config: " + where + " must be an object");
  for (const auto& [key, _] : obj.items())
    check(allowed.count(key) > 0, ErrorKind::Config, "config: unknown key '" + key + "' in " + where);
}

template <class T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, std::string("config: bad value for '") + key + "'");
  }
}

void parse_dataset(const json& j, DatasetConfig& d) {
  reject_unknown(j, {"kind", "name", "images", "labels", "test_images", "test_labels",
                     "train_batches", "test_batches", "synth_train", "synth_test", "synth_classes",
                     "synth_channels", "synth_height", "synth_width", "desk_subset",
                     "desk_train_per_class", "desk_test_per_class"},
                 "dataset");
  read_field(j, "kind", d.kind);
  read_field(j, "name", d.name);
  read_field(j, "images", d.images);
  read_field(j, "labels", d.labels);
  read_field(j, "test_images", d.test_images);
  read_field(j, "test_labels", d.test_labels);
  read_field(j, "train_batches", d.train_batches);
  read_field(j, "test_batches", d.test_batches);
  read_field(j, "synth_train", d.synth_train);
  read_field(j, "synth_test", d.synth_test);
  read_field(j, "synth_classes", d.synth_classes);
  read_field(j, "synth_channels", d.synth_shape[0]);
  read_field(j, "synth_height", d.synth_shape[1]);
  read_field(j, "synth_width", d.synth_shape[2]);
  read_field(j, "desk_subset", d.desk_subset);
  read_field(j, "desk_train_per_class", d.desk_train_per_class);
  read_field(j, "desk_test_per_class", d.desk_test_per_class);
  check(d.kind == "synth" || d.kind == "idx" || d.kind == "cifar", ErrorKind::Config,
        "config: dataset.kind must be synth|idx|cifar");
}

void parse_attack(const json& j, AttackConfig& a) {
  reject_unknown(j, {"kind", "target_class", "start", "duration", "poison_lr", "poison_decay",
                     "top_fraction", "drop_fraction", "poison_fraction", "mask_bottom95",
                     "mask_sparse", "mask_global", "mask_at_upload", "num_adversaries",
                     "adversary_epochs", "data_count"},
                 "attack");
  std::string kind = attack_kind_to_string(a.kind);
  read_field(j, "kind", kind);
  a.kind = attack_kind_from_string(kind);
  read_field(j, "target_class", a.target_class);
  read_field(j, "start", a.start);
  read_field(j, "duration", a.duration);
  read_field(j, "poison_lr", a.poison_lr);
  read_field(j, "poison_decay", a.poison_decay);
  read_field(j, "top_fraction", a.top_fraction);
  read_field(j, "drop_fraction", a.drop_fraction);
  read_field(j, "poison_fraction", a.poison_fraction);
  read_field(j, "mask_bottom95", a.mask_bottom95);
  read_field(j, "mask_sparse", a.mask_sparse);
  read_field(j, "mask_global", a.mask_global);
  read_field(j, "mask_at_upload", a.mask_at_upload);
  read_field(j, "num_adversaries", a.num_adversaries);
  read_field(j, "adversary_epochs", a.adversary_epochs);
  read_field(j, "data_count", a.data_count);
}

void parse_defenses(const json& j, DefenseSection& d) {
  reject_unknown(j, {"dp", "partfedavg_drop", "strip"}, "defenses");
  if (j.contains("dp")) {
    const json& dp = j.at("dp");
    reject_unknown(dp, {"enabled", "mean", "sigma", "post_aggregation"}, "defenses.dp");
    read_field(dp, "enabled", d.dp_enabled);
    read_field(dp, "mean", d.dp_mean);
    read_field(dp, "sigma", d.dp_sigma);
    read_field(dp, "post_aggregation", d.dp_post_aggregation);
  }
  read_field(j, "partfedavg_drop", d.partfedavg_drop);
  if (j.contains("strip")) {
    const json& st = j.at("strip");
    reject_unknown(st, {"n", "blend", "bins"}, "defenses.strip");
    read_field(st, "n", d.strip.perturbations);
    read_field(st, "blend", d.strip.blend);
    read_field(st, "bins", d.strip.bins);
  }
}

void parse_stego(const json& j, StegoSection& s) {
  reject_unknown(j, {"nbits", "weights", "epochs", "batch", "ramp_epochs", "lr_encoder",
                     "lr_critic", "critic_clip", "train_count", "heldout_count", "artifacts_dir"},
                 "stego");
  read_field(j, "nbits", s.nbits);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    check(w.is_array() && w.size() == 4, ErrorKind::Config,
          "config: stego.weights must have exactly 4 entries");
    for (size_t i = 0; i < 4; ++i) s.weights[i] = w.at(i).get<double>();
  }
  read_field(j, "epochs", s.epochs);
  read_field(j, "batch", s.batch);
  read_field(j, "ramp_epochs", s.ramp_epochs);
  read_field(j, "lr_encoder", s.lr_encoder);
  read_field(j, "lr_critic", s.lr_critic);
  read_field(j, "critic_clip", s.critic_clip);
  read_field(j, "train_count", s.train_count);
  read_field(j, "heldout_count", s.heldout_count);
  read_field(j, "artifacts_dir", s.artifacts_dir);
}

void validate(const ExperimentConfig& c) {
  check(c.pool_size >= 1, ErrorKind::Config, "config: pool_size must be >= 1");
  check(c.clients_per_round >= 1 && c.clients_per_round <= c.pool_size, ErrorKind::Config,
        "config: clients_per_round must lie in [1, pool_size]");
  check(c.rounds >= 1, ErrorKind::Config, "config: rounds must be >= 1");
  check(c.alpha > 0.0, ErrorKind::Config, "config: partition.alpha must be > 0");
  check(c.local_epochs >= 1 && c.batch_size >= 1, ErrorKind::Config,
        "config: benign.epochs and benign.batch must be >= 1");
  check(c.benign_lr >= 0.0 && c.benign_decay >= 0.0, ErrorKind::Config,
        "config: benign.lr and benign.decay must be >= 0");
  if (c.attack.kind != AttackKind::None) {
    check(c.attack.start >= 0 && c.attack.duration >= 0, ErrorKind::Config,
          "config: attack.start and attack.duration must be >= 0");
    check(c.attack.start + c.attack.duration <= c.rounds, ErrorKind::Config,
          "config: attack window start+duration must be <= rounds");
    check(c.attack.top_fraction >= 0.0 && c.attack.top_fraction < 1.0, ErrorKind::Config,
          "config: attack.top_fraction must lie in [0,1)");
    check(c.attack.drop_fraction >= 0.0 && c.attack.drop_fraction < 1.0, ErrorKind::Config,
          "config: attack.drop_fraction must lie in [0,1)");
    check(c.attack.poison_fraction > 0.0 && c.attack.poison_fraction <= 1.0, ErrorKind::Config,
          "config: attack.poison_fraction must lie in (0,1]");
    check(c.attack.num_adversaries >= 1 && c.attack.num_adversaries < c.pool_size,
          ErrorKind::Config, "config: attack.num_adversaries must lie in [1, pool_size)");
    check(c.attack.num_adversaries <= c.clients_per_round, ErrorKind::Config,
          "config: more adversaries than selection slots");
    check(c.attack.adversary_epochs >= 0, ErrorKind::Config,
          "config: attack.adversary_epochs must be >= 0");
    check(c.attack.data_count >= 0, ErrorKind::Config,
          "config: attack.data_count must be >= 0");
  }
  for (double w : c.stego.weights)
    check(w >= 0.0, ErrorKind::Config, "config: stego.weights must be >= 0");
  check(c.stego.nbits >= 8 && c.stego.nbits <= 256 && c.stego.nbits % 8 == 0, ErrorKind::Config,
        "config: stego.nbits must be a multiple of 8 in [8,256]");
  check(c.stego.ramp_epochs >= 0, ErrorKind::Config, "config: stego.ramp_epochs must be >= 0");
  check(c.defenses.dp_sigma >= 0.0, ErrorKind::Config, "config: defenses.dp.sigma must be >= 0");
  check(c.defenses.partfedavg_drop >= 0.0 && c.defenses.partfedavg_drop < 1.0, ErrorKind::Config,
        "config: defenses.partfedavg_drop must lie in [0,1)");
  check(c.snapshot_every >= 0, ErrorKind::Config, "config: snapshot_every must be >= 0");
  check(c.defenses.strip.perturbations >= 1, ErrorKind::Config,
        "config: defenses.strip.n must be >= 1");
  check(c.defenses.strip.blend > 0.0 && c.defenses.strip.blend < 1.0, ErrorKind::Config,
        "config: defenses.strip.blend must lie in (0,1)");
}

void parse_top(const json& j, ExperimentConfig& c) {
  reject_unknown(j, {"name", "seed", "output", "dataset", "model", "pool_size",
                     "clients_per_round", "rounds", "partition", "server", "benign", "attack",
                     "defenses", "stego", "compute_tal", "asr_include_target", "snapshot_every"},
                 "the top level");
  read_field(j, "name", c.name);
  read_field(j, "seed", c.seed);
  read_field(j, "output", c.output);
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), c.dataset);
  read_field(j, "model", c.model);
  read_field(j, "pool_size", c.pool_size);
  read_field(j, "clients_per_round", c.clients_per_round);
  read_field(j, "rounds", c.rounds);
  if (j.contains("partition")) {
    reject_unknown(j.at("partition"), {"alpha"}, "partition");
    read_field(j.at("partition"), "alpha", c.alpha);
  }
  if (j.contains("server")) {
    reject_unknown(j.at("server"), {"eta", "weighted_by_samples"}, "server");
    read_field(j.at("server"), "eta", c.server_eta);
    read_field(j.at("server"), "weighted_by_samples", c.weighted_by_samples);
  }
  if (j.contains("benign")) {
    reject_unknown(j.at("benign"), {"lr", "decay", "epochs", "batch"}, "benign");
    read_field(j.at("benign"), "lr", c.benign_lr);
    read_field(j.at("benign"), "decay", c.benign_decay);
    read_field(j.at("benign"), "epochs", c.local_epochs);
    read_field(j.at("benign"), "batch", c.batch_size);
  }
  if (j.contains("attack")) parse_attack(j.at("attack"), c.attack);
  if (j.contains("defenses")) parse_defenses(j.at("defenses"), c.defenses);
  if (j.contains("stego")) parse_stego(j.at("stego"), c.stego);
  read_field(j, "compute_tal", c.compute_tal);
  read_field(j, "asr_include_target", c.asr_include_target);
  read_field(j, "snapshot_every", c.snapshot_every);
  validate(c);
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  c.base_dir = base_dir;
  parse_top(j, c);
  return c;
}

ExperimentConfig config_load(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), ErrorKind::Io, "cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return config_from_json_text(text, std::filesystem::path(path).parent_path().string());
}

void config_apply_overrides(ExperimentConfig& cfg, const std::string& overrides_json) {
  json j;
  try {
    j = json::parse(overrides_json);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("overrides: invalid JSON: ") + e.what());
  }
  parse_top(j, cfg);
}

std::string config_canonical_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["dataset"] = {{"kind", c.dataset.kind},
                  {"name", c.dataset.name},
                  {"images", c.dataset.images},
                  {"labels", c.dataset.labels},
                  {"test_images", c.dataset.test_images},
                  {"test_labels", c.dataset.test_labels},
                  {"train_batches", c.dataset.train_batches},
                  {"test_batches", c.dataset.test_batches},
                  {"synth_train", c.dataset.synth_train},
                  {"synth_test", c.dataset.synth_test},
                  {"synth_classes", c.dataset.synth_classes},
                  {"synth_channels", c.dataset.synth_shape[0]},
                  {"synth_height", c.dataset.synth_shape[1]},
                  {"synth_width", c.dataset.synth_shape[2]},
                  {"desk_subset", c.dataset.desk_subset},
                  {"desk_train_per_class", c.dataset.desk_train_per_class},
                  {"desk_test_per_class", c.dataset.desk_test_per_class}};
  j["model"] = c.model;
  j["pool_size"] = c.pool_size;
  j["clients_per_round"] = c.clients_per_round;
  j["rounds"] = c.rounds;
  j["partition"] = {{"alpha", c.alpha}};
  j["server"] = {{"eta", c.server_eta}, {"weighted_by_samples", c.weighted_by_samples}};
  j["benign"] = {{"lr", c.benign_lr},
                 {"decay", c.benign_decay},
                 {"epochs", c.local_epochs},
                 {"batch", c.batch_size}};
  j["attack"] = {{"kind", attack_kind_to_string(c.attack.kind)},
                 {"target_class", c.attack.target_class},
                 {"start", c.attack.start},
                 {"duration", c.attack.duration},
                 {"poison_lr", c.attack.poison_lr},
                 {"poison_decay", c.attack.poison_decay},
                 {"top_fraction", c.attack.top_fraction},
                 {"drop_fraction", c.attack.drop_fraction},
                 {"poison_fraction", c.attack.poison_fraction},
                 {"mask_bottom95", c.attack.mask_bottom95},
                 {"mask_sparse", c.attack.mask_sparse},
                 {"mask_global", c.attack.mask_global},
                 {"mask_at_upload", c.attack.mask_at_upload},
                 {"num_adversaries", c.attack.num_adversaries},
                 {"adversary_epochs", c.attack.adversary_epochs},
                 {"data_count", c.attack.data_count}};
  j["defenses"] = {{"dp",
                    {{"enabled", c.defenses.dp_enabled},
                     {"mean", c.defenses.dp_mean},
                     {"sigma", c.defenses.dp_sigma},
                     {"post_aggregation", c.defenses.dp_post_aggregation}}},
                   {"partfedavg_drop", c.defenses.partfedavg_drop},
                   {"strip",
                    {{"n", c.defenses.strip.perturbations},
                     {"blend", c.defenses.strip.blend},
                     {"bins", c.defenses.strip.bins}}}};
  j["stego"] = {{"nbits", c.stego.nbits},
                {"weights", c.stego.weights},
                {"epochs", c.stego.epochs},
                {"batch", c.stego.batch},
                {"ramp_epochs", c.stego.ramp_epochs},
                {"lr_encoder", c.stego.lr_encoder},
                {"lr_critic", c.stego.lr_critic},
                {"critic_clip", c.stego.critic_clip},
                {"train_count", c.stego.train_count},
                {"heldout_count", c.stego.heldout_count},
                {"artifacts_dir", c.stego.artifacts_dir}};
  j["compute_tal"] = c.compute_tal;
  j["asr_include_target"] = c.asr_include_target;
  j["snapshot_every"] = c.snapshot_every;
  return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canon = config_canonical_json(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string resolve_path(const ExperimentConfig& cfg, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute() || cfg.base_dir.empty()) return path;
  return (std::filesystem::path(cfg.base_dir) / p).string();
}

RoundConfig round_config_of(const ExperimentConfig& c) {
  RoundConfig r;
  r.clients_per_round = c.clients_per_round;
  r.server_eta = c.server_eta;
  r.local_epochs = c.local_epochs;
  r.batch_size = c.batch_size;
  r.benign_lr = c.benign_lr;
  r.benign_decay = c.benign_decay;
  r.weighted_by_samples = c.weighted_by_samples;
  return r;
}

DefensePlan defense_plan_of(const ExperimentConfig& c) {
  DefensePlan p;
  p.dp_enabled = c.defenses.dp_enabled;
  p.dp.mean = c.defenses.dp_mean;
  p.dp.sigma = c.defenses.dp_sigma;
  p.dp_post_aggregation = c.defenses.dp_post_aggregation;
  p.partfedavg_drop = c.defenses.partfedavg_drop;
  return p;
}

StegoTrainConfig stego_train_config_of(const ExperimentConfig& c) {
  StegoTrainConfig s;
  s.w1 = c.stego.weights[0];
  s.w2 = c.stego.weights[1];
  s.w3 = c.stego.weights[2];
  s.w4 = c.stego.weights[3];
  s.epochs = c.stego.epochs;
  s.batch = c.stego.batch;
  s.nbits = c.stego.nbits;
  s.ramp_epochs = c.stego.ramp_epochs;
  s.lr_encoder = c.stego.lr_encoder;
  s.lr_critic = c.stego.lr_critic;
  s.critic_clip = c.stego.critic_clip;
  s.seed = c.seed;
  return s;
}

}  // namespace fedsab
