#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fedsab.h"

namespace {

namespace fs = std::filesystem;

const char* kTinyRun = R"({
  "name": "capi_tiny",
  "seed": 3,
  "rounds": 3,
  "dataset": {"kind": "synth", "synth_train": 60, "synth_test": 30, "synth_classes": 3,
              "synth_channels": 1, "synth_height": 8, "synth_width": 8},
  "pool_size": 3,
  "clients_per_round": 2,
  "benign": {"lr": 0.05, "decay": 0.0, "epochs": 1, "batch": 8},
  "attack": {"kind": "badnets", "target_class": 0, "start": 1, "duration": 1,
             "poison_lr": 0.05, "mask_bottom95": true, "mask_sparse": true},
  "compute_tal": true
})";

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("capi: version and error text") {
  CHECK(std::strlen(fedsab_version()) > 0);
  fedsab_config* cfg = nullptr;
  CHECK(fedsab_config_load("/nonexistent/config.json", &cfg) == FEDSAB_ERR_IO);
  CHECK(std::strlen(fedsab_last_error()) > 0);
  CHECK(fedsab_config_parse("{\"bogus_key\": 1}", nullptr, &cfg) == FEDSAB_ERR_CONFIG);
}

TEST_CASE("capi: config lifecycle") {
  fedsab_config* cfg = nullptr;
  REQUIRE(fedsab_config_parse(kTinyRun, nullptr, &cfg) == FEDSAB_OK);
  char* canon = fedsab_config_canonical(cfg);
  REQUIRE(canon != nullptr);
  CHECK(std::string(canon).find("capi_tiny") != std::string::npos);
  char* hash1 = fedsab_config_hash(cfg);
  REQUIRE(fedsab_config_override(cfg, "{\"seed\": 4}") == FEDSAB_OK);
  char* hash2 = fedsab_config_hash(cfg);
  CHECK(std::string(hash1) != std::string(hash2));
  CHECK(fedsab_config_override(cfg, "{\"nope\": 1}") == FEDSAB_ERR_CONFIG);
  fedsab_string_free(canon);
  fedsab_string_free(hash1);
  fedsab_string_free(hash2);
  fedsab_config_free(cfg);
}

TEST_CASE("capi: run is deterministic and refuses accidental overwrites") {
  const std::string base = (fs::temp_directory_path() / "fedsab_capi_run").string();
  fs::remove_all(base);
  fs::remove_all(base + "_2");

  fedsab_config* cfg = nullptr;
  REQUIRE(fedsab_config_parse(kTinyRun, nullptr, &cfg) == FEDSAB_OK);
  REQUIRE(fedsab_run(cfg, base.c_str(), 0) == FEDSAB_OK);
  CHECK(fs::exists(base + "/rounds.csv"));
  CHECK(fs::exists(base + "/manifest.json"));
  CHECK(fs::exists(base + "/model_final.bin"));
  CHECK(fs::exists(base + "/clean_rounds.csv"));

  // an existing non-empty directory requires the overwrite flag
  CHECK(fedsab_run(cfg, base.c_str(), 0) == FEDSAB_ERR_USAGE);
  REQUIRE(fedsab_run(cfg, (base + "_2").c_str(), 0) == FEDSAB_OK);
  CHECK(slurp(base + "/rounds.csv") == slurp(base + "_2/rounds.csv"));

  // compare joins the two runs
  const std::string out_csv = base + "_cmp.csv";
  const char* dirs[2] = {base.c_str(), nullptr};
  const std::string second = base + "_2";
  dirs[1] = second.c_str();
  REQUIRE(fedsab_compare(dirs, 2, out_csv.c_str()) == FEDSAB_OK);
  const std::string joined = slurp(out_csv);
  CHECK(joined.find("round,ba_") == 0);

  fedsab_config_free(cfg);
}

TEST_CASE("capi: phash helpers") {
  CHECK(fedsab_phash_distance(0xffULL, 0x00ULL) == 8);
  uint64_t h = 0;
  CHECK(fedsab_phash64_file("/nonexistent.pgm", &h) == FEDSAB_ERR_IO);
}
