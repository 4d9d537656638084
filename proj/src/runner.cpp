#include "runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "metrics.hpp"
#include "util.hpp"

namespace fedsab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorKind::Io, "cannot open for writing: " + path);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  check(f.good(), ErrorKind::Io, "write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorKind::Io, "cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string csv_cell(const std::optional<double>& v) {
  return v ? format_float(*v) : std::string();
}

Architecture arch_of(const ExperimentConfig& cfg, const Dataset& ds) {
  return build_model(cfg.model, ds.channels(), ds.height(), ds.width(), ds.num_classes);
}

struct StegoBundle {
  StegoNets nets;
  std::vector<SecretBits> secrets;
  StegoTrainStats stats;
  bool trained = false;
};

void save_stego_bundle(const StegoBundle& b, const std::string& dir) {
  b.nets.encoder.save(dir + "/stego_encoder.bin");
  b.nets.decoder.save(dir + "/stego_decoder.bin");
  b.nets.critic.save(dir + "/stego_critic.bin");
  json meta;
  meta["nbits"] = b.nets.nbits;
  meta["channels"] = b.nets.channels;
  meta["height"] = b.nets.height;
  meta["width"] = b.nets.width;
  json secrets = json::array();
  for (const auto& s : b.secrets) {
    json one;
    one["label"] = s.source_label;
    one["bits"] = s.bits;
    secrets.push_back(one);
  }
  meta["secrets"] = secrets;
  write_text(dir + "/stego.json", meta.dump(2) + "\n");
  if (b.trained) {
    std::string csv = "epoch,loss_image,loss_perceptual,loss_secret,loss_critic,joint\n";
    for (const auto& row : b.stats.trace)
      csv += std::to_string(row.epoch) + "," + format_float(row.loss_image) + "," +
             format_float(row.loss_perceptual) + "," + format_float(row.loss_secret) + "," +
             format_float(row.loss_critic) + "," + format_float(row.joint) + "\n";
    write_text(dir + "/stego_trace.csv", csv);
    write_text(dir + "/stego_eval.json",
               json{{"heldout_bit_accuracy", b.stats.heldout_bit_accuracy},
                    {"heldout_loss_image", b.stats.heldout_loss_image}}
                       .dump(2) +
                   "\n");
  }
}

StegoBundle load_stego_bundle(const std::string& dir) {
  StegoBundle b;
  json meta = json::parse(read_text(dir + "/stego.json"));
  b.nets.nbits = meta.at("nbits").get<int>();
  b.nets.channels = meta.at("channels").get<int>();
  b.nets.height = meta.at("height").get<int>();
  b.nets.width = meta.at("width").get<int>();
  b.nets.encoder = ParamSet::load(dir + "/stego_encoder.bin");
  b.nets.decoder = ParamSet::load(dir + "/stego_decoder.bin");
  b.nets.critic = ParamSet::load(dir + "/stego_critic.bin");
  for (const auto& one : meta.at("secrets")) {
    SecretBits s;
    s.source_label = one.at("label").get<std::string>();
    s.bits = one.at("bits").get<std::vector<uint8_t>>();
    s.nbits = static_cast<int>(s.bits.size());
    b.secrets.push_back(std::move(s));
  }
  return b;
}

StegoBundle prepare_stego(const ExperimentConfig& cfg, const Dataset& train) {
  StegoBundle b;
  b.secrets = class_secrets_of(cfg, train.num_classes);
  if (!cfg.stego.artifacts_dir.empty()) {
    const std::string dir = resolve_path(cfg, cfg.stego.artifacts_dir);
    StegoBundle loaded = load_stego_bundle(dir);
    loaded.secrets = b.secrets;
    return loaded;
  }
  Dataset stego_train, stego_held;
  stego_train.name = train.name;
  stego_train.num_classes = train.num_classes;
  stego_held = stego_train;
  const int n = static_cast<int>(train.size());
  const int tn = std::min(cfg.stego.train_count, n);
  for (int i = 0; i < tn; ++i) stego_train.examples.push_back(train.examples[static_cast<size_t>(i)]);
  for (int i = tn; i < std::min(n, tn + cfg.stego.heldout_count); ++i)
    stego_held.examples.push_back(train.examples[static_cast<size_t>(i)]);
  if (stego_held.empty()) stego_held = stego_train;

  b.trained = true;
  b.nets = train_stego(stego_train, stego_held, b.secrets, stego_train_config_of(cfg), &b.stats);
  return b;
}

Dataset build_asr_testset(const ExperimentConfig& cfg, const Dataset& test, const TriggerFn& trigger) {
  if (cfg.asr_include_target) {
    Dataset out;
    out.name = test.name + "+poison-test-all";
    out.num_classes = test.num_classes;
    for (const auto& ex : test.examples)
      out.examples.push_back({trigger(ex.pixels), cfg.attack.target_class});
    return out;
  }
  auto [train_side, test_side] =
      build_poison_dataset(test, trigger, cfg.attack.target_class, 1.0, cfg.seed);
  return std::move(test_side.data);
}

std::string rounds_csv_row(const RoundReport& r) {
  std::string row = std::to_string(r.round) + "," + r.phase + "," + format_float(r.ba) + "," +
                    csv_cell(r.asr) + "," + csv_cell(r.tal) + "," + format_float(r.benign_loss) +
                    "," + std::to_string(r.zeroed_top) + "," + std::to_string(r.zeroed_sparse) +
                    "\n";
  return row;
}

constexpr const char* kRoundsHeader = "round,phase,ba,asr,tal,benign_loss,zeroed_top,zeroed_sparse\n";

struct ParsedRounds {
  std::vector<int> round;
  std::vector<std::string> phase;
  std::vector<std::string> ba, asr;  // raw cells, preserved verbatim
};

ParsedRounds parse_rounds_csv(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), ErrorKind::Io, "cannot open: " + path);
  std::string line;
  check(static_cast<bool>(std::getline(f, line)), ErrorKind::Format, "empty rounds.csv: " + path);
  ParsedRounds out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 8) cells.push_back("");
    out.round.push_back(std::stoi(cells[0]));
    out.phase.push_back(cells[1]);
    out.ba.push_back(cells[2]);
    out.asr.push_back(cells[3]);
  }
  for (size_t i = 0; i < out.round.size(); ++i)
    check(out.round[i] == static_cast<int>(i), ErrorKind::Format,
          "rounds.csv is not a contiguous round sequence: " + path);
  return out;
}

void ensure_out_dir(const std::string& out_dir, bool overwrite) {
  if (fs::exists(out_dir)) {
    const bool empty = fs::is_directory(out_dir) && fs::is_empty(out_dir);
    check(empty || overwrite, ErrorKind::Usage,
          "output directory exists (pass overwrite to replace): " + out_dir);
    if (!empty && overwrite) {
      fs::remove_all(out_dir);
      fs::create_directories(out_dir);
    }
  } else {
    fs::create_directories(out_dir);
  }
}

ExperimentConfig absolutized(const ExperimentConfig& cfg) {
  ExperimentConfig out = cfg;
  out.dataset.images = resolve_path(cfg, cfg.dataset.images);
  out.dataset.labels = resolve_path(cfg, cfg.dataset.labels);
  out.dataset.test_images = resolve_path(cfg, cfg.dataset.test_images);
  out.dataset.test_labels = resolve_path(cfg, cfg.dataset.test_labels);
  for (auto& p : out.dataset.train_batches) p = resolve_path(cfg, p);
  for (auto& p : out.dataset.test_batches) p = resolve_path(cfg, p);
  if (!out.stego.artifacts_dir.empty())
    out.stego.artifacts_dir = resolve_path(cfg, cfg.stego.artifacts_dir);
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> resolve_datasets(const ExperimentConfig& cfg) {
  Dataset train, test;
  const DatasetConfig& d = cfg.dataset;
  if (d.kind == "synth") {
    Dataset all = synth_dataset(cfg.seed, d.synth_train + d.synth_test, d.synth_classes,
                                d.synth_shape);
    all.name = d.name;
    train.name = d.name;
    train.num_classes = all.num_classes;
    test = train;
    for (int i = 0; i < d.synth_train; ++i)
      train.examples.push_back(std::move(all.examples[static_cast<size_t>(i)]));
    for (int i = d.synth_train; i < d.synth_train + d.synth_test; ++i)
      test.examples.push_back(std::move(all.examples[static_cast<size_t>(i)]));
  } else if (d.kind == "idx") {
    train = load_idx(resolve_path(cfg, d.images), resolve_path(cfg, d.labels));
    test = load_idx(resolve_path(cfg, d.test_images), resolve_path(cfg, d.test_labels));
    train.name = test.name = d.name;
    test.num_classes = train.num_classes = std::max(train.num_classes, test.num_classes);
  } else {
    train = load_cifar_binary([&] {
      std::vector<std::string> p;
      for (const auto& b : d.train_batches) p.push_back(resolve_path(cfg, b));
      return p;
    }());
    test = load_cifar_binary([&] {
      std::vector<std::string> p;
      for (const auto& b : d.test_batches) p.push_back(resolve_path(cfg, b));
      return p;
    }());
    train.name = test.name = d.name;
  }
  if (d.desk_subset) {
    train = take_per_class(train, d.desk_train_per_class);
    test = take_per_class(test, d.desk_test_per_class);
  }
  check(!train.empty() && !test.empty(), ErrorKind::Config, "resolved datasets are empty");
  return {std::move(train), std::move(test)};
}

std::vector<SecretBits> class_secrets_of(const ExperimentConfig& cfg, int num_classes) {
  std::vector<SecretBits> secrets;
  const uint64_t seed = stream_seed(cfg.seed, 0, 0, Stream::SecretBits);
  for (int k = 0; k < num_classes; ++k)
    secrets.push_back(
        secret_from_label(cfg.dataset.name + "/" + std::to_string(k), cfg.stego.nbits, seed));
  return secrets;
}

TriggerFn eval_trigger(const ExperimentConfig& cfg, const StegoNets* stego,
                       const SecretBits* target_secret) {
  switch (cfg.attack.kind) {
    case AttackKind::Sab: {
      check(stego && target_secret, ErrorKind::Config, "SAB trigger needs stego artifacts");
      return [stego, target_secret](const Tensor& img) {
        return apply_trigger(img, encode_residual(*stego, img, *target_secret));
      };
    }
    case AttackKind::BadNets:
      return [](const Tensor& img) { return badnets_trigger(img); };
    case AttackKind::Dba:
      return [](const Tensor& img) { return dba_trigger(img, kDbaAllParts); };
    case AttackKind::None:
      break;
  }
  fail(ErrorKind::Config, "eval_trigger: the run has no attack configured");
  return {};
}

void run_experiment_to_dir(const ExperimentConfig& raw_cfg, const std::string& out_dir,
                           bool overwrite) {
  const ExperimentConfig cfg = absolutized(raw_cfg);
  ensure_out_dir(out_dir, overwrite);
  const std::string started = iso_utc_now();
  std::vector<std::string> artifacts;

  auto write_manifest = [&](const std::string& status) {
    json m;
    m["config_hash"] = config_hash(cfg);
    m["tool_version"] = kToolVersion;
    m["started_at"] = started;
    m["finished_at"] = iso_utc_now();
    m["status"] = status;
    m["artifacts"] = artifacts;
    write_text(out_dir + "/manifest.json", m.dump(2) + "\n");
  };

  try {
    write_text(out_dir + "/config.json", config_canonical_json(cfg));
    artifacts.push_back("config.json");

    auto [train, test] = resolve_datasets(cfg);
    const Architecture arch = arch_of(cfg, train);
    const PartitionPlan partition =
        dirichlet_partition(train, cfg.pool_size, cfg.alpha, cfg.seed);

    StegoBundle stego;
    Dataset poisoned_test;
    const bool attacked = cfg.attack.kind != AttackKind::None;
    if (cfg.attack.kind == AttackKind::Sab) {
      stego = prepare_stego(cfg, train);
      save_stego_bundle(stego, out_dir);
      artifacts.insert(artifacts.end(),
                       {"stego_encoder.bin", "stego_decoder.bin", "stego_critic.bin", "stego.json"});
      if (stego.trained) {
        artifacts.push_back("stego_trace.csv");
        artifacts.push_back("stego_eval.json");
      }
    }
    const SecretBits* target_secret =
        cfg.attack.kind == AttackKind::Sab
            ? &stego.secrets[static_cast<size_t>(cfg.attack.target_class)]
            : nullptr;
    if (attacked)
      poisoned_test = build_asr_testset(
          cfg, test, eval_trigger(cfg, cfg.attack.kind == AttackKind::Sab ? &stego.nets : nullptr,
                                  target_secret));

    Dataset adversary_slice;
    if (attacked && cfg.attack.data_count > 0) {
      adversary_slice.name = train.name;
      adversary_slice.num_classes = train.num_classes;
      const int n = std::min<int>(cfg.attack.data_count, static_cast<int>(train.size()));
      for (int i = 0; i < n; ++i) adversary_slice.examples.push_back(train.examples[static_cast<size_t>(i)]);
    }

    ExperimentEnv env;
    env.arch = arch;
    env.train = &train;
    env.test = &test;
    env.partition = partition;
    env.round_cfg = round_config_of(cfg);
    env.attack = cfg.attack;
    env.defenses = defense_plan_of(cfg);
    env.rounds = cfg.rounds;
    env.seed = cfg.seed;
    env.stego = cfg.attack.kind == AttackKind::Sab ? &stego.nets : nullptr;
    env.target_secret = target_secret;
    env.poisoned_test = attacked ? &poisoned_test : nullptr;
    env.adversary_data = adversary_slice.empty() ? nullptr : &adversary_slice;

    // same-seed clean twin for TAL
    std::vector<double> clean_ba;
    if (attacked && cfg.compute_tal) {
      ExperimentEnv twin = env;
      twin.attack = AttackConfig{};
      twin.stego = nullptr;
      twin.target_secret = nullptr;
      twin.poisoned_test = nullptr;
      std::ofstream cf(out_dir + "/clean_rounds.csv", std::ios::binary | std::ios::trunc);
      check(cf.good(), ErrorKind::Io, "cannot open clean_rounds.csv for writing");
      cf << kRoundsHeader;
      run_experiment(twin, [&](const RoundReport& r) {
        clean_ba.push_back(r.ba);
        cf << rounds_csv_row(r);
        cf.flush();
      });
      artifacts.push_back("clean_rounds.csv");
      env.clean_ba = &clean_ba;
    }

    std::ofstream rf(out_dir + "/rounds.csv", std::ios::binary | std::ios::trunc);
    check(rf.good(), ErrorKind::Io, "cannot open rounds.csv for writing");
    rf << kRoundsHeader;
    GlobalModel final_model;
    int snapshot_counter = 0;
    run_experiment(
        env,
        [&](const RoundReport& r) {
          rf << rounds_csv_row(r);
          rf.flush();
          ++snapshot_counter;
          (void)snapshot_counter;
        },
        &final_model);
    artifacts.push_back("rounds.csv");

    final_model.params.save(out_dir + "/model_final.bin");
    artifacts.push_back("model_final.bin");
    json model_meta;
    model_meta["model"] = cfg.model;
    model_meta["channels"] = train.channels();
    model_meta["height"] = train.height();
    model_meta["width"] = train.width();
    model_meta["num_classes"] = train.num_classes;
    model_meta["rounds"] = cfg.rounds;
    write_text(out_dir + "/model.json", model_meta.dump(2) + "\n");
    artifacts.push_back("model.json");

    write_manifest("ok");
  } catch (...) {
    write_manifest("failed");
    throw;
  }
}

void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_csv) {
  check(run_dirs.size() >= 2, ErrorKind::Usage, "compare needs at least two run directories");
  std::vector<ParsedRounds> runs;
  std::vector<std::string> names;
  size_t min_rounds = SIZE_MAX;
  for (const auto& dir : run_dirs) {
    runs.push_back(parse_rounds_csv(dir + "/rounds.csv"));
    std::string name = fs::path(dir).filename().string();
    if (name.empty()) name = fs::path(dir).parent_path().filename().string();
    for (const auto& existing : names)
      if (existing == name) name += "_" + std::to_string(names.size());
    names.push_back(name);
    min_rounds = std::min(min_rounds, runs.back().round.size());
  }
  check(min_rounds > 0 && min_rounds != SIZE_MAX, ErrorKind::Input, "compare: runs have no rounds");

  std::string csv = "round";
  for (const auto& n : names) csv += ",ba_" + n + ",asr_" + n;
  csv += "\n";
  for (size_t r = 0; r < min_rounds; ++r) {
    csv += std::to_string(r);
    for (const auto& run : runs) csv += "," + run.ba[r] + "," + run.asr[r];
    csv += "\n";
  }
  write_text(out_csv, csv);
}

RunArtifacts load_run(const std::string& run_dir, const std::string& model_path) {
  RunArtifacts art;
  art.cfg = config_load(run_dir + "/config.json");
  auto [train, test] = resolve_datasets(art.cfg);
  art.train = std::move(train);
  art.test = std::move(test);
  art.arch = arch_of(art.cfg, art.train);
  const std::string mp = model_path.empty() ? run_dir + "/model_final.bin" : model_path;
  art.model = ParamSet::load(mp);
  if (art.cfg.attack.kind == AttackKind::Sab) {
    StegoBundle b = load_stego_bundle(run_dir);
    art.stego = std::move(b.nets);
    art.secrets = std::move(b.secrets);
    art.has_stego = true;
  } else {
    art.secrets = class_secrets_of(art.cfg, art.test.num_classes);
  }
  return art;
}

namespace {

std::string histogram_csv(const Histogram& h) {
  std::string csv = "bin_lo,bin_hi,count\n";
  for (size_t i = 0; i < h.counts.size(); ++i)
    csv += format_float(h.edges[i]) + "," + format_float(h.edges[i + 1]) + "," +
           std::to_string(h.counts[i]) + "\n";
  return csv;
}

}  // namespace

double strip_eval(const std::string& run_dir, const std::string& model_path, int cohort_size,
                  const std::string& out_dir) {
  RunArtifacts art = load_run(run_dir, model_path);
  check(art.cfg.attack.kind != AttackKind::None, ErrorKind::Config,
        "strip-eval: the run has no attack to build a poisoned cohort from");
  fs::create_directories(out_dir);

  const SecretBits* target =
      art.has_stego ? &art.secrets[static_cast<size_t>(art.cfg.attack.target_class)] : nullptr;
  const TriggerFn trigger = eval_trigger(art.cfg, art.has_stego ? &art.stego : nullptr, target);

  const int n = static_cast<int>(art.test.size());
  const StripConfig& sc = art.cfg.defenses.strip;
  check(cohort_size >= 1, ErrorKind::Input, "strip-eval: cohort size must be >= 1");
  check(n >= cohort_size + sc.perturbations, ErrorKind::Input,
        "strip-eval: test set too small for cohort plus perturbation pool");

  Dataset benign_cohort, poisoned_cohort;
  benign_cohort.name = poisoned_cohort.name = art.test.name;
  benign_cohort.num_classes = poisoned_cohort.num_classes = art.test.num_classes;
  for (int i = 0; i < cohort_size; ++i) {
    const auto& ex = art.test.examples[static_cast<size_t>(i)];
    benign_cohort.examples.push_back(ex);
    if (ex.label != art.cfg.attack.target_class)
      poisoned_cohort.examples.push_back({trigger(ex.pixels), art.cfg.attack.target_class});
  }
  check(!poisoned_cohort.empty(), ErrorKind::Input, "strip-eval: poisoned cohort is empty");

  std::vector<int> perturbation;
  for (int i = cohort_size; i < n; ++i) perturbation.push_back(i);

  const uint64_t seed = stream_seed(art.cfg.seed, 0, 0, Stream::Strip);
  const Histogram hb =
      strip_histogram(art.arch, art.model, benign_cohort, art.test, perturbation, sc, seed);
  const Histogram hp =
      strip_histogram(art.arch, art.model, poisoned_cohort, art.test, perturbation, sc, seed);
  const double inter = histogram_intersection(hb, hp);

  write_text(out_dir + "/strip_benign.csv", histogram_csv(hb));
  write_text(out_dir + "/strip_poisoned.csv", histogram_csv(hp));
  write_text(out_dir + "/strip_summary.csv",
             "attack,benign_count,poisoned_count,intersection\n" +
                 attack_kind_to_string(art.cfg.attack.kind) + "," +
                 std::to_string(benign_cohort.size()) + "," +
                 std::to_string(poisoned_cohort.size()) + "," + format_float(inter) + "\n");
  return inter;
}

namespace {

// bounding boxes of the fixed-patch triggers, as {y0,y1,x0,x1} half-open
std::vector<std::array<int, 4>> patch_regions(const ExperimentConfig& cfg, int H, int W,
                                              int channels) {
  if (cfg.attack.kind == AttackKind::BadNets) {
    if (channels == 1) return {{H - 4, H, W - 4, W}};
    return {{H - 5, H, W - 5, W}};
  }
  if (cfg.attack.kind == AttackKind::Dba)
    return {{0, 1, 0, 2}, {0, 1, 3, 5}, {2, 3, 0, 2}, {2, 3, 3, 5}};
  return {};
}

}  // namespace

void gradcam_dump(const std::string& run_dir, const std::string& model_path, int count,
                  int class_index, bool triggered, const std::string& out_dir) {
  RunArtifacts art = load_run(run_dir, model_path);
  fs::create_directories(out_dir);
  const bool attacked = art.cfg.attack.kind != AttackKind::None;
  check(!triggered || attacked, ErrorKind::Config,
        "gradcam-dump: triggered mode needs a run with an attack");

  TriggerFn trigger;
  if (triggered) {
    const SecretBits* target =
        art.has_stego ? &art.secrets[static_cast<size_t>(art.cfg.attack.target_class)] : nullptr;
    trigger = eval_trigger(art.cfg, art.has_stego ? &art.stego : nullptr, target);
  }
  const int cam_class = class_index >= 0 ? class_index : art.cfg.attack.target_class;
  const int H = art.test.height(), W = art.test.width();
  const auto regions =
      triggered ? patch_regions(art.cfg, H, W, art.test.channels()) : std::vector<std::array<int, 4>>{};

  std::string csv = "image_id,mass_fraction,area_fraction,ratio\n";
  const int n = std::min(count, static_cast<int>(art.test.size()));
  check(n >= 1, ErrorKind::Input, "gradcam-dump: no images requested");
  for (int i = 0; i < n; ++i) {
    Tensor img = art.test.examples[static_cast<size_t>(i)].pixels;
    if (trigger) img = trigger(img);
    double raw_min = 0.0, raw_max = 0.0;
    const Tensor heat = gradcam(art.arch, art.model, img, cam_class, &raw_min, &raw_max);
    char name[64];
    std::snprintf(name, sizeof(name), "heatmap_%03d", i);
    Tensor as_image({1, heat.dim(0), heat.dim(1)});
    for (int64_t k = 0; k < heat.size(); ++k) as_image[k] = heat[k];
    write_pnm(as_image, out_dir + "/" + name + ".pgm");
    write_text(out_dir + "/" + name + ".txt",
               "min " + format_float(raw_min, 9) + "\nmax " + format_float(raw_max, 9) + "\n");

    if (!regions.empty()) {
      double total = 0.0, inside = 0.0;
      int64_t area = 0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double v = heat[static_cast<int64_t>(y) * W + x];
          total += v;
          for (const auto& r : regions)
            if (y >= r[0] && y < r[1] && x >= r[2] && x < r[3]) {
              inside += v;
              break;
            }
        }
      for (const auto& r : regions) area += static_cast<int64_t>(r[1] - r[0]) * (r[3] - r[2]);
      const double mass_fraction = total > 0.0 ? inside / total : 0.0;
      const double area_fraction = static_cast<double>(area) / (static_cast<double>(H) * W);
      csv += std::to_string(i) + "," + format_float(mass_fraction) + "," +
             format_float(area_fraction) + "," +
             format_float(area_fraction > 0 ? mass_fraction / area_fraction : 0.0) + "\n";
    }
  }
  if (!regions.empty()) write_text(out_dir + "/gradcam_mass.csv", csv);
}

namespace {

void phash_write_cohort(const std::string& name, const std::vector<uint64_t>& orig,
                        const std::vector<uint64_t>& pois, const std::string& out_dir,
                        std::string& summary) {
  std::string csv = "image_id,hash_original,hash_poisoned,distance\n";
  std::vector<int> dist;
  char hex[20];
  for (size_t i = 0; i < orig.size(); ++i) {
    const int d = phash_distance(orig[i], pois[i]);
    dist.push_back(d);
    csv += std::to_string(i) + ",";
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(orig[i]));
    csv += std::string(hex) + ",";
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(pois[i]));
    csv += std::string(hex) + "," + std::to_string(d) + "\n";
  }
  write_text(out_dir + "/phash_" + name + ".csv", csv);
  std::vector<int> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (int d : dist) mean += d;
  mean /= static_cast<double>(dist.size());
  const double median = dist.size() % 2 == 1
                            ? sorted[dist.size() / 2]
                            : 0.5 * (sorted[dist.size() / 2 - 1] + sorted[dist.size() / 2]);
  summary += name + "," + std::to_string(dist.size()) + "," + format_float(mean) + "," +
             format_float(median) + "\n";
}

}  // namespace

void phash_eval_run(const std::string& run_dir, const std::vector<std::string>& attacks, int count,
                    const std::string& out_dir) {
  RunArtifacts art = load_run(run_dir, "");
  fs::create_directories(out_dir);
  const int n = std::min(count, static_cast<int>(art.test.size()));
  check(n >= 1, ErrorKind::Input, "phash-eval: no images requested");

  std::vector<const Tensor*> originals;
  for (int i = 0; i < n; ++i) originals.push_back(&art.test.examples[static_cast<size_t>(i)].pixels);
  std::vector<uint64_t> orig_hash;
  for (const Tensor* t : originals) orig_hash.push_back(phash64(*t));

  std::string summary = "attack,count,mean_distance,median_distance\n";
  for (const auto& attack : attacks) {
    ExperimentConfig acfg = art.cfg;
    acfg.attack.kind = attack_kind_from_string(attack);
    check(acfg.attack.kind != AttackKind::None, ErrorKind::Input,
          "phash-eval: 'none' is not a poisoning attack");
    if (acfg.attack.kind == AttackKind::Sab)
      check(art.has_stego, ErrorKind::Config,
            "phash-eval: SAB cohort requested but the run has no stego artifacts");
    const SecretBits* target =
        art.has_stego ? &art.secrets[static_cast<size_t>(art.cfg.attack.target_class)] : nullptr;
    const TriggerFn trigger =
        eval_trigger(acfg, art.has_stego ? &art.stego : nullptr, target);
    std::vector<uint64_t> pois_hash;
    for (const Tensor* t : originals) pois_hash.push_back(phash64(trigger(*t)));
    phash_write_cohort(attack, orig_hash, pois_hash, out_dir, summary);
  }
  write_text(out_dir + "/phash_summary.csv", summary);
}

void phash_eval_dirs(const std::string& original_dir, const std::vector<std::string>& poisoned_dirs,
                     const std::string& out_dir) {
  auto list_images = [](const std::string& dir) {
    std::vector<std::string> files;
    check(fs::is_directory(dir), ErrorKind::Io, "not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string ext = entry.path().extension().string();
      if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    check(!files.empty(), ErrorKind::Input, "no PGM/PPM images in: " + dir);
    return files;
  };

  fs::create_directories(out_dir);
  const auto originals = list_images(original_dir);
  std::vector<uint64_t> orig_hash;
  for (const auto& f : originals) orig_hash.push_back(phash64(read_pnm(f)));

  std::string summary = "attack,count,mean_distance,median_distance\n";
  for (const auto& dir : poisoned_dirs) {
    const auto files = list_images(dir);
    check(files.size() == originals.size(), ErrorKind::Input,
          "phash-eval: cohort size mismatch between " + original_dir + " and " + dir);
    std::vector<uint64_t> pois_hash;
    for (const auto& f : files) pois_hash.push_back(phash64(read_pnm(f)));
    std::string name = fs::path(dir).filename().string();
    if (name.empty()) name = fs::path(dir).parent_path().filename().string();
    phash_write_cohort(name, orig_hash, pois_hash, out_dir, summary);
  }
  write_text(out_dir + "/phash_summary.csv", summary);
}

}  // namespace fedsab
