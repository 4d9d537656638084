#include "fedsab.h"

#include <cstring>
#include <string>

#include "config.hpp"
#include "data.hpp"
#include "metrics.hpp"
#include "runner.hpp"
#include "util.hpp"

using namespace fedsab;

struct fedsab_config {
  ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

fedsab_status status_of(ErrorKind kind) { return static_cast<fedsab_status>(static_cast<int>(kind)); }

template <class Fn>
fedsab_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FEDSAB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FEDSAB_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

extern "C" {

const char* fedsab_version(void) { return kToolVersion; }

const char* fedsab_last_error(void) { return g_last_error.c_str(); }

void fedsab_set_threads(int n) { set_worker_threads(n); }

fedsab_status fedsab_config_load(const char* path, fedsab_config** out) {
  return guarded([&] {
    check(path && out, ErrorKind::Usage, "fedsab_config_load: null argument");
    *out = new fedsab_config{config_load(path)};
  });
}

fedsab_status fedsab_config_parse(const char* json_text, const char* base_dir,
                                  fedsab_config** out) {
  return guarded([&] {
    check(json_text && out, ErrorKind::Usage, "fedsab_config_parse: null argument");
    *out = new fedsab_config{config_from_json_text(json_text, base_dir ? base_dir : "")};
  });
}

fedsab_status fedsab_config_override(fedsab_config* cfg, const char* overrides_json) {
  return guarded([&] {
    check(cfg && overrides_json, ErrorKind::Usage, "fedsab_config_override: null argument");
    config_apply_overrides(cfg->cfg, overrides_json);
  });
}

char* fedsab_config_canonical(const fedsab_config* cfg) {
  if (!cfg) return nullptr;
  return dup_string(config_canonical_json(cfg->cfg));
}

char* fedsab_config_hash(const fedsab_config* cfg) {
  if (!cfg) return nullptr;
  return dup_string(config_hash(cfg->cfg));
}

void fedsab_config_free(fedsab_config* cfg) { delete cfg; }

void fedsab_string_free(char* s) { delete[] s; }

fedsab_status fedsab_run(const fedsab_config* cfg, const char* out_dir, int overwrite) {
  return guarded([&] {
    check(cfg && out_dir, ErrorKind::Usage, "fedsab_run: null argument");
    run_experiment_to_dir(cfg->cfg, out_dir, overwrite != 0);
  });
}

fedsab_status fedsab_compare(const char* const* run_dirs, size_t n, const char* out_csv) {
  return guarded([&] {
    check(run_dirs && out_csv, ErrorKind::Usage, "fedsab_compare: null argument");
    std::vector<std::string> dirs;
    for (size_t i = 0; i < n; ++i) dirs.emplace_back(run_dirs[i]);
    compare_runs(dirs, out_csv);
  });
}

fedsab_status fedsab_strip_eval(const char* run_dir, const char* model_path, int cohort_size,
                                const char* out_dir, double* intersection_out) {
  return guarded([&] {
    check(run_dir && out_dir, ErrorKind::Usage, "fedsab_strip_eval: null argument");
    const double inter = strip_eval(run_dir, model_path ? model_path : "", cohort_size, out_dir);
    if (intersection_out) *intersection_out = inter;
  });
}

fedsab_status fedsab_gradcam_dump(const char* run_dir, const char* model_path, int count,
                                  int class_index, int triggered, const char* out_dir) {
  return guarded([&] {
    check(run_dir && out_dir, ErrorKind::Usage, "fedsab_gradcam_dump: null argument");
    gradcam_dump(run_dir, model_path ? model_path : "", count, class_index, triggered != 0,
                 out_dir);
  });
}

fedsab_status fedsab_phash_eval_run(const char* run_dir, const char* attacks_csv, int count,
                                    const char* out_dir) {
  return guarded([&] {
    check(run_dir && attacks_csv && out_dir, ErrorKind::Usage,
          "fedsab_phash_eval_run: null argument");
    const auto attacks = split_csv_list(attacks_csv);
    check(!attacks.empty(), ErrorKind::Usage, "fedsab_phash_eval_run: no attacks named");
    phash_eval_run(run_dir, attacks, count, out_dir);
  });
}

fedsab_status fedsab_phash_eval_dirs(const char* original_dir, const char* const* poisoned_dirs,
                                     size_t n, const char* out_dir) {
  return guarded([&] {
    check(original_dir && poisoned_dirs && out_dir, ErrorKind::Usage,
          "fedsab_phash_eval_dirs: null argument");
    std::vector<std::string> dirs;
    for (size_t i = 0; i < n; ++i) dirs.emplace_back(poisoned_dirs[i]);
    check(!dirs.empty(), ErrorKind::Usage, "fedsab_phash_eval_dirs: no poisoned cohorts");
    phash_eval_dirs(original_dir, dirs, out_dir);
  });
}

fedsab_status fedsab_phash64_file(const char* pnm_path, uint64_t* hash_out) {
  return guarded([&] {
    check(pnm_path && hash_out, ErrorKind::Usage, "fedsab_phash64_file: null argument");
    *hash_out = phash64(read_pnm(pnm_path));
  });
}

int fedsab_phash_distance(uint64_t a, uint64_t b) { return phash_distance(a, b); }

}  // extern "C"
