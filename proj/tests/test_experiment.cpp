#include <doctest.h>

#include <cmath>
#include <limits>

#include "hubbind/errors.hpp"
#include "hubbind/experiment.hpp"
#include "support.hpp"

using namespace hubbind;

namespace {

std::string config_error(const ojson& j) {
  try {
    (void)parse_experiment(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("bundled desk.json is the built-in desk config") {
  const ExperimentConfig file = load_experiment(std::filesystem::path(HUBBIND_SOURCE_DIR) / "configs" / "desk.json");
  CHECK(experiment_to_json(file) == experiment_to_json(desk_config()));
  CHECK(config_hash(file) == config_hash(desk_config()));
}

TEST_CASE("canonical json round-trips") {
  ExperimentConfig c = desk_config();
  c.train.pairs[1].temperature = TemperatureParam::learnable(0.07);
  c.train.hub_frozen = true;
  c.encoders.at("M1").head = HeadKind::kMlp;
  const ojson j = experiment_to_json(c);
  CHECK(experiment_to_json(parse_experiment(j)) == j);
  CHECK(experiment_to_json(parse_experiment(parse_json(j.dump(), "test"))) == j);
}

TEST_CASE("strict parsing names the offending field") {
  const ojson base = experiment_to_json(desk_config());

  ojson j = base;
  j["train"]["epochz"] = 3;
  CHECK(config_error(j).find("train.epochz") != std::string::npos);

  j = base;
  j["train"].erase("epochs");
  CHECK(config_error(j).find("train.epochs") != std::string::npos);

  j = base;
  j["world"]["modalities"][2].erase("obs_dim");
  CHECK(config_error(j).find("obs_dim") != std::string::npos);

  j = base;
  j["train"]["epochs"] = -1;
  CHECK(config_error(j).find("train.epochs") != std::string::npos);

  j = base;
  j["train"]["hub_frozen"] = "yes";
  CHECK(config_error(j).find("hub_frozen") != std::string::npos);

  j = base;
  j["world"]["modalities"][0]["hub"] = false;
  CHECK(!config_error(j).empty());

  j = base;
  j["encoders"].erase("M2");
  CHECK(config_error(j).find("M2") != std::string::npos);

  j = base;
  j["eval"]["zero_shot"][0][1] = "nope";
  CHECK(!config_error(j).empty());

  CHECK_THROWS_AS(load_experiment("/nonexistent/config.json"), IoError);
}

TEST_CASE("config_hash tracks content; with_seed replaces the seed") {
  const ExperimentConfig c = desk_config();
  CHECK(config_hash(c).size() == 16);
  CHECK(config_hash(c) == config_hash(desk_config()));
  ExperimentConfig d = c;
  d.train.learning_rate *= 2.0;
  CHECK(config_hash(d) != config_hash(c));

  const ExperimentConfig s = with_seed(c, 7);
  CHECK(s.seed == 7);
  CHECK(config_hash(s) != config_hash(c));
  CHECK(config_hash(with_seed(s, 0)) == config_hash(c));
}

TEST_CASE("MetricsReport: canonical serialization, non-finite rejected") {
  MetricsReport a, b;
  a.set("z.metric", 0.5);
  a.set("a.metric", 1.0 / 3.0);
  a.set_flag("a.flag", true);
  a.set_meta("who", "test");
  b.set_meta("who", "test");
  b.set_flag("a.flag", true);
  b.set("a.metric", 1.0 / 3.0);
  b.set("z.metric", 0.5);
  CHECK(a == b);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.to_csv().find("metric,value\n") == 0);
  CHECK(a.to_csv().find("a.flag,1") != std::string::npos);
  CHECK(a.to_csv().find("who") == std::string::npos);

  // JSON keeps enough digits to recover the double exactly.
  const ojson j = parse_json(a.to_json(), "report");
  CHECK(j.dump().find("0.3333333333333333") != std::string::npos);

  CHECK_THROWS_AS(a.set("bad", std::numeric_limits<double>::quiet_NaN()), NumericError);
  CHECK_THROWS_AS(a.set("bad", std::numeric_limits<double>::infinity()), NumericError);
  CHECK(!a.has("bad"));
  CHECK_THROWS(a.get("missing"));

  MetricsReport m;
  m.merge(a, "run.");
  CHECK(m.get("run.z.metric") == 0.5);
  CHECK(m.flag("run.a.flag"));
}

TEST_CASE("run_experiment on a tiny config is deterministic and carries provenance") {
  ExperimentConfig c = desk_config();
  c.train.epochs = 1;
  c.train.steps_per_epoch = 5;
  c.eval.n_per_class = 10;
  c.eval.few_shot_modalities.clear();
  const ExperimentResult a = run_experiment(c);
  const ExperimentResult b = run_experiment(c);
  CHECK(a.report.to_json() == b.report.to_json());
  CHECK(a.report.meta("config_hash") == config_hash(c));
  CHECK(a.report.has("zeroshot.M1_vs_T.accuracy"));
  const MetricsReport again = evaluate_experiment(c, a.world, a.state.encoders);
  CHECK(again.get("zeroshot.M1_vs_T.accuracy") == a.report.get("zeroshot.M1_vs_T.accuracy"));
}
