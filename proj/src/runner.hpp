#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace fedsab {

inline constexpr const char* kToolVersion = "0.1.0";

// Executes the experiment described by the config: resolves datasets, trains
// (or loads) the stego nets for SAB, optionally runs the same-seed clean twin
// for TAL, streams rounds.csv, and writes model/stego artifacts plus
// manifest.json into out_dir. Refuses an existing non-empty out_dir unless
// overwrite is set.
void run_experiment_to_dir(const ExperimentConfig& cfg, const std::string& out_dir, bool overwrite);

// Joins the rounds.csv of several runs on the round index (truncated to the
// shortest run); columns are suffixed with each run directory's basename.
void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_csv);

// STRIP entropy histograms for a benign and a poisoned cohort against the
// run's model (or an explicit snapshot); writes the two histogram CSVs and a
// summary. Returns the histogram intersection.
double strip_eval(const std::string& run_dir, const std::string& model_path, int cohort_size,
                  const std::string& out_dir);

// Saliency heatmaps (PGM + min/max sidecars) for test images, plus the
// in-patch mass fraction CSV when the run's attack has a fixed patch region.
void gradcam_dump(const std::string& run_dir, const std::string& model_path, int count,
                  int class_index, bool triggered, const std::string& out_dir);

// Perceptual-hash distance distributions original-vs-poisoned, rebuilt from a
// run directory for the named attacks.
void phash_eval_run(const std::string& run_dir, const std::vector<std::string>& attacks, int count,
                    const std::string& out_dir);

// Directory mode: original and poisoned cohorts as PGM/PPM files (sorted by
// filename; cohort sizes must match).
void phash_eval_dirs(const std::string& original_dir, const std::vector<std::string>& poisoned_dirs,
                     const std::string& out_dir);

// Rehydrated artifacts of a finished run; shared by the eval commands.
struct RunArtifacts {
  ExperimentConfig cfg;
  Dataset train;
  Dataset test;
  Architecture arch;
  ParamSet model;
  bool has_stego = false;
  StegoNets stego;
  std::vector<SecretBits> secrets;
};

RunArtifacts load_run(const std::string& run_dir, const std::string& model_path = "");

// Dataset resolution shared with the run command (synth | idx | cifar, desk
// subsetting applied).
std::pair<Dataset, Dataset> resolve_datasets(const ExperimentConfig& cfg);

// Per-class secrets (class k's string is "<dataset.name>/k").
std::vector<SecretBits> class_secrets_of(const ExperimentConfig& cfg, int num_classes);

// The evaluation-time trigger of a config's attack (DBA uses all parts).
TriggerFn eval_trigger(const ExperimentConfig& cfg, const StegoNets* stego,
                       const SecretBits* target_secret);

}  // namespace fedsab
