#include <filesystem>
#include <fstream>

#include "config.hpp"
#include "doctest.h"
#include "util.hpp"

using namespace fedsab;

namespace {

const char* kMinimal = R"({
  "name": "t",
  "seed": 9,
  "rounds": 8,
  "dataset": {"kind": "synth", "synth_train": 50, "synth_test": 20, "synth_classes": 5,
              "synth_channels": 1, "synth_height": 8, "synth_width": 8},
  "pool_size": 4,
  "clients_per_round": 2,
  "attack": {"kind": "badnets", "target_class": 1, "start": 2, "duration": 3}
})";

}  // namespace

TEST_CASE("config: defaults and parsing") {
  ExperimentConfig cfg = config_from_json_text(kMinimal, "");
  CHECK(cfg.name == "t");
  CHECK(cfg.seed == 9);
  CHECK(cfg.rounds == 8);
  CHECK(cfg.attack.kind == AttackKind::BadNets);
  CHECK(cfg.attack.top_fraction == doctest::Approx(0.05));
  CHECK(cfg.attack.drop_fraction == doctest::Approx(0.20));
  CHECK(cfg.defenses.dp_mean == doctest::Approx(1e-6));
  CHECK(cfg.defenses.dp_sigma == doctest::Approx(1e-3));
  CHECK(cfg.stego.nbits == 32);
  CHECK(cfg.alpha == doctest::Approx(0.9));
}

TEST_CASE("config: unknown keys are hard errors") {
  CHECK_THROWS_WITH_AS(static_cast<void>(config_from_json_text(R"({"naem": "x"})", "")),
                       doctest::Contains("unknown key 'naem'"), Error);
  CHECK_THROWS_WITH_AS(
      static_cast<void>(config_from_json_text(R"({"attack": {"poison_lrr": 1}})", "")),
      doctest::Contains("poison_lrr"), Error);
  CHECK_THROWS_WITH_AS(
      static_cast<void>(config_from_json_text(R"({"defenses": {"dp": {"sigm": 1}}})", "")),
      doctest::Contains("sigm"), Error);
}

TEST_CASE("config: schema validation") {
  // attack window must fit the round budget
  CHECK_THROWS_WITH_AS(
      static_cast<void>(config_from_json_text(
          R"({"rounds": 10, "attack": {"kind": "sab", "start": 8, "duration": 5}})", "")),
      doctest::Contains("attack window"), Error);
  CHECK_THROWS_AS(static_cast<void>(config_from_json_text(
                      R"({"pool_size": 2, "clients_per_round": 5})", "")),
                  Error);
  CHECK_THROWS_AS(static_cast<void>(config_from_json_text(R"({"partition": {"alpha": 0}})", "")),
                  Error);
  CHECK_THROWS_AS(static_cast<void>(config_from_json_text(R"({"stego": {"nbits": 12}})", "")),
                  Error);
  CHECK_THROWS_AS(static_cast<void>(config_from_json_text(R"({"not json)", "")), Error);
}

TEST_CASE("config: canonical form round trips") {
  ExperimentConfig cfg = config_from_json_text(kMinimal, "/base");
  const std::string canon = config_canonical_json(cfg);
  ExperimentConfig again = config_from_json_text(canon, "/base");
  CHECK(config_canonical_json(again) == canon);
  CHECK(config_hash(again) == config_hash(cfg));

  // a different seed changes the digest
  ExperimentConfig other = cfg;
  other.seed = 10;
  CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("config: overrides merge onto the parsed config") {
  ExperimentConfig cfg = config_from_json_text(kMinimal, "");
  config_apply_overrides(cfg, R"({"seed": 123, "dataset": {"desk_subset": true}})");
  CHECK(cfg.seed == 123);
  CHECK(cfg.dataset.desk_subset);
  CHECK(cfg.rounds == 8);  // untouched fields stay
  CHECK_THROWS_AS(config_apply_overrides(cfg, R"({"sed": 1})"), Error);
}

TEST_CASE("config: relative paths resolve against the config directory") {
  ExperimentConfig cfg = config_from_json_text(kMinimal, "/some/base");
  CHECK(resolve_path(cfg, "data/x.bin") == "/some/base/data/x.bin");
  CHECK(resolve_path(cfg, "/abs/x.bin") == "/abs/x.bin");
  CHECK(resolve_path(cfg, "") == "");
}

TEST_CASE("config: section conversion helpers") {
  ExperimentConfig cfg = config_from_json_text(kMinimal, "");
  RoundConfig rc = round_config_of(cfg);
  CHECK(rc.clients_per_round == 2);
  DefensePlan dp = defense_plan_of(cfg);
  CHECK_FALSE(dp.dp_enabled);
  StegoTrainConfig st = stego_train_config_of(cfg);
  CHECK(st.seed == cfg.seed);
  CHECK(st.w1 == doctest::Approx(2.0));
}
