// fedsab command-line front end. All functionality lives behind the C API in
// fedsab.h; this file only maps argv onto it.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsab.h"
#include "json.hpp"

namespace {

int fail_with(fedsab_status st) {
  std::fprintf(stderr, "error: %s\n", fedsab_last_error());
  return static_cast<int>(st);
}

std::string output_root() {
  const char* env = std::getenv("FEDSAB_OUT");
  return env && *env ? env : ".";
}

std::string field_or(const nlohmann::json& j, const char* key, const std::string& fallback) {
  if (j.contains(key) && j.at(key).is_string() && !j.at(key).get<std::string>().empty())
    return j.at(key).get<std::string>();
  return fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsab: federated-learning backdoor attack/defense simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  long long seed_override = -1;
  std::string out_override;
  int threads = 1;
  bool desk = false;
  bool overwrite = false;
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--out", out_override, "output directory (or file for compare)");
  app.add_option("--threads", threads, "worker thread bound (results are identical for any value)");
  app.add_flag("--desk", desk, "force the desk-scale dataset subset");
  app.add_flag("--overwrite", overwrite, "allow replacing an existing output directory");

  // run
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  std::string config_path;
  run->add_option("config", config_path, "experiment config (JSON)")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "join ASR/BA curves of several runs");
  std::vector<std::string> run_dirs;
  compare->add_option("runs", run_dirs, "run directories")->expected(-2);

  // strip-eval
  auto* strip = app.add_subcommand("strip-eval", "STRIP entropy histograms for a run's model");
  std::string strip_run, strip_model;
  int strip_count = 200;
  strip->add_option("--run", strip_run, "run directory")->required();
  strip->add_option("--model", strip_model, "model snapshot (default: final)");
  strip->add_option("--count", strip_count, "cohort size");

  // gradcam-dump
  auto* cam = app.add_subcommand("gradcam-dump", "saliency heatmaps for test images");
  std::string cam_run, cam_model;
  int cam_count = 50;
  int cam_class = -1;
  bool cam_benign = false;
  cam->add_option("--run", cam_run, "run directory")->required();
  cam->add_option("--model", cam_model, "model snapshot (default: final)");
  cam->add_option("--count", cam_count, "number of images");
  cam->add_option("--class", cam_class, "class index for the map (default: attack target)");
  cam->add_flag("--benign", cam_benign, "use untriggered images");

  // phash-eval
  auto* ph = app.add_subcommand("phash-eval", "perceptual-hash distances original vs poisoned");
  std::string ph_run, ph_attacks = "sab,badnets,dba", ph_original;
  std::vector<std::string> ph_poisoned;
  int ph_count = 200;
  ph->add_option("--run", ph_run, "run directory (cohorts built from its test set)");
  ph->add_option("--attacks", ph_attacks, "comma list of attacks for --run mode");
  ph->add_option("--count", ph_count, "images per cohort in --run mode");
  ph->add_option("--original", ph_original, "directory of original PGM/PPM images");
  ph->add_option("--poisoned", ph_poisoned, "directories of poisoned cohorts");

  CLI11_PARSE(app, argc, argv);
  fedsab_set_threads(threads);

  if (run->parsed()) {
    fedsab_config* cfg = nullptr;
    fedsab_status st = fedsab_config_load(config_path.c_str(), &cfg);
    if (st != FEDSAB_OK) return fail_with(st);
    std::string overrides = "{";
    bool first = true;
    if (seed_override >= 0) {
      overrides += "\"seed\": " + std::to_string(seed_override);
      first = false;
    }
    if (desk) {
      overrides += std::string(first ? "" : ", ") + "\"dataset\": {\"desk_subset\": true}";
      first = false;
    }
    overrides += "}";
    if (overrides != "{}") {
      st = fedsab_config_override(cfg, overrides.c_str());
      if (st != FEDSAB_OK) {
        fedsab_config_free(cfg);
        return fail_with(st);
      }
    }
    std::string out_dir = out_override;
    if (out_dir.empty()) {
      char* canon = fedsab_config_canonical(cfg);
      const auto j = nlohmann::json::parse(canon);
      fedsab_string_free(canon);
      const std::string leaf = field_or(j, "output", field_or(j, "name", "run"));
      out_dir = (std::filesystem::path(output_root()) / leaf).string();
    }
    st = fedsab_run(cfg, out_dir.c_str(), overwrite ? 1 : 0);
    fedsab_config_free(cfg);
    if (st != FEDSAB_OK) return fail_with(st);
    std::printf("run complete: %s\n", out_dir.c_str());
    return 0;
  }

  if (compare->parsed()) {
    if (out_override.empty()) {
      std::fprintf(stderr, "error: compare needs --out <csv>\n");
      return static_cast<int>(FEDSAB_ERR_USAGE);
    }
    std::vector<const char*> dirs;
    for (const auto& d : run_dirs) dirs.push_back(d.c_str());
    const fedsab_status st = fedsab_compare(dirs.data(), dirs.size(), out_override.c_str());
    if (st != FEDSAB_OK) return fail_with(st);
    std::printf("comparison written: %s\n", out_override.c_str());
    return 0;
  }

  if (strip->parsed()) {
    const std::string out_dir = out_override.empty() ? strip_run + "/strip" : out_override;
    double intersection = 0.0;
    const fedsab_status st =
        fedsab_strip_eval(strip_run.c_str(), strip_model.empty() ? nullptr : strip_model.c_str(),
                          strip_count, out_dir.c_str(), &intersection);
    if (st != FEDSAB_OK) return fail_with(st);
    std::printf("histogram intersection: %.6f (outputs in %s)\n", intersection, out_dir.c_str());
    return 0;
  }

  if (cam->parsed()) {
    const std::string out_dir = out_override.empty() ? cam_run + "/gradcam" : out_override;
    const fedsab_status st =
        fedsab_gradcam_dump(cam_run.c_str(), cam_model.empty() ? nullptr : cam_model.c_str(),
                            cam_count, cam_class, cam_benign ? 0 : 1, out_dir.c_str());
    if (st != FEDSAB_OK) return fail_with(st);
    std::printf("heatmaps written: %s\n", out_dir.c_str());
    return 0;
  }

  if (ph->parsed()) {
    if (!ph_run.empty()) {
      const std::string out_dir = out_override.empty() ? ph_run + "/phash" : out_override;
      const fedsab_status st =
          fedsab_phash_eval_run(ph_run.c_str(), ph_attacks.c_str(), ph_count, out_dir.c_str());
      if (st != FEDSAB_OK) return fail_with(st);
      std::printf("phash distances written: %s\n", out_dir.c_str());
      return 0;
    }
    if (ph_original.empty() || ph_poisoned.empty() || out_override.empty()) {
      std::fprintf(stderr,
                   "error: phash-eval needs either --run or --original/--poisoned plus --out\n");
      return static_cast<int>(FEDSAB_ERR_USAGE);
    }
    std::vector<const char*> dirs;
    for (const auto& d : ph_poisoned) dirs.push_back(d.c_str());
    const fedsab_status st = fedsab_phash_eval_dirs(ph_original.c_str(), dirs.data(), dirs.size(),
                                                    out_override.c_str());
    if (st != FEDSAB_OK) return fail_with(st);
    std::printf("phash distances written: %s\n", out_override.c_str());
    return 0;
  }

  return 0;
}
