#include <doctest.h>

#include <set>
#include <sstream>

#include "hubbind/ablation.hpp"
#include "hubbind/errors.hpp"
#include "support.hpp"

using namespace hubbind;

namespace {

// Small enough that a full grid runs in well under a second per cell.
ExperimentConfig tiny_base() {
  ExperimentConfig c = desk_config();
  c.train.epochs = 2;
  c.train.steps_per_epoch = 8;
  for (auto& p : c.train.pairs) p.batch_size = 32;
  c.eval.n_per_class = 20;
  c.eval.prompts_per_class = 4;
  c.eval.few_shot_modalities.clear();
  return c;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char ch : s) n += ch == '\n';
  return n;
}

}  // namespace

TEST_CASE("every axis has a default grid of valid values") {
  CHECK(all_axes().size() == 8);
  const ExperimentConfig base = tiny_base();
  for (AblationAxis axis : all_axes()) {
    CAPTURE(to_string(axis));
    CHECK(axis_from_string(to_string(axis)) == axis);
    const auto grid = default_grid(axis);
    CHECK(grid.size() >= 2);
    std::set<std::string> labels;
    for (const auto& v : grid) {
      CHECK_NOTHROW((void)apply_axis(base, axis, v));
      labels.insert(grid_label(v));
    }
    CHECK(labels.size() == grid.size());
  }
  CHECK_THROWS_AS(axis_from_string("learning_rate"), ConfigError);
}

TEST_CASE("apply_axis changes only its field") {
  const ExperimentConfig base = tiny_base();
  const std::string h0 = config_hash(base);

  ExperimentConfig c = apply_axis(base, AblationAxis::kTemperature, "learnable");
  for (const auto& p : c.train.pairs) CHECK(p.temperature.is_learnable());
  c = apply_axis(base, AblationAxis::kTemperature, 0.05);
  for (const auto& p : c.train.pairs) CHECK(p.temperature.value() == doctest::Approx(0.05));

  c = apply_axis(base, AblationAxis::kProjectionHead, "mlp");
  for (const auto& [name, e] : c.encoders) CHECK(e.head == HeadKind::kMlp);

  CHECK(apply_axis(base, AblationAxis::kEpochs, 5).train.epochs == 5);
  for (const auto& p : apply_axis(base, AblationAxis::kBatchSize, 8).train.pairs) CHECK(p.batch_size == 8);
  CHECK(apply_axis(base, AblationAxis::kHubCapacity, 256).encoders.at("hub").hidden_widths == std::vector<std::size_t>{256});
  CHECK(apply_axis(base, AblationAxis::kHubCapacity, 256).encoders.at("T").hidden_widths == base.encoders.at("T").hidden_widths);

  c = apply_axis(base, AblationAxis::kNoiseStrength, 0.5);
  for (const auto& m : c.world.modalities) {
    if (m.hub) CHECK(m.obs_noise_scale == 0.5);
  }
  for (const auto& p : apply_axis(base, AblationAxis::kAlignment, 0.5).train.pairs) CHECK(p.alignment == 0.5);
  c = apply_axis(base, AblationAxis::kLossMix, 0.25);
  for (const auto& p : c.train.pairs) {
    CHECK(p.infonce_weight == 0.75);
    CHECK(p.l2_weight == 0.25);
  }

  CHECK(config_hash(base) == h0);
  CHECK_THROWS_AS(apply_axis(base, AblationAxis::kEpochs, "many"), ConfigError);
  CHECK_THROWS_AS(apply_axis(base, AblationAxis::kProjectionHead, "conv"), ConfigError);
  CHECK_THROWS_AS(apply_axis(base, AblationAxis::kLossMix, 1.5), ConfigError);
  CHECK_THROWS_AS(apply_axis(base, AblationAxis::kBatchSize, 0), ConfigError);
}

TEST_CASE("suite parsing") {
  const ojson base = experiment_to_json(tiny_base());
  ojson j = {{"base", base}, {"seeds", {0, 1}}, {"axes", {"hub_capacity"}}};
  AblationSpec spec = parse_ablation_spec(j, ".");
  REQUIRE(spec.suites.size() == 1);
  CHECK(spec.suites[0].grid.size() == 3);
  CHECK(spec.suites[0].seeds == std::vector<std::uint64_t>{0, 1});

  j["axes"] = "all";
  CHECK(parse_ablation_spec(j, ".").suites.size() == 8);

  j["axes"] = ojson::array({{{"axis", "epochs"}, {"grid", {1, 2}}, {"seeds", {3}}}});
  spec = parse_ablation_spec(j, ".");
  CHECK(spec.suites[0].seeds == std::vector<std::uint64_t>{3});

  j["overrides"] = {{"train", {{"epochs", 4}}}};
  CHECK(parse_ablation_spec(j, ".").base.train.epochs == 4);

  ojson bad = j;
  bad["axes"] = {"wobble"};
  CHECK_THROWS_AS(parse_ablation_spec(bad, "."), ConfigError);
  bad = j;
  bad["axes"] = ojson::array({{{"axis", "epochs"}, {"grid", {1, 1}}}});
  CHECK_THROWS_AS(parse_ablation_spec(bad, "."), ConfigError);
  bad = j;
  bad["axes"] = ojson::array({{{"axis", "epochs"}, {"grid", ojson::array()}}});
  CHECK_THROWS_AS(parse_ablation_spec(bad, "."), ConfigError);
  bad = j;
  bad["axes"] = ojson::array({{{"axis", "temperature"}, {"grid", {"hot"}}}});
  CHECK_THROWS_AS(parse_ablation_spec(bad, "."), ConfigError);
  bad = j;
  bad["extra"] = 1;
  CHECK_THROWS_AS(parse_ablation_spec(bad, "."), ConfigError);

  const auto dir = oracle::scratch_dir("ablation_spec");
  write_text_file(dir / "base.json", base.dump(2));
  write_text_file(dir / "suite.json", ojson{{"base", "base.json"}, {"axes", {"epochs"}}}.dump());
  CHECK(load_ablation_spec(dir / "suite.json").base.train.epochs == 2);
}

TEST_CASE("hub_capacity over 2 seeds gives one row per cell and metric") {
  const AblationSuite suite{AblationAxis::kHubCapacity, default_grid(AblationAxis::kHubCapacity), {0, 1}};
  std::size_t callbacks = 0;
  const AblationResult r = run_ablation(tiny_base(), suite, 1, [&](const AblationCell&) { ++callbacks; });
  CHECK(callbacks == 6);
  REQUIRE(r.cells.size() == 6);
  CHECK(r.values == std::vector<std::string>{"16", "64", "256"});
  for (const auto& cell : r.cells) {
    CHECK(cell.ok);
    CHECK(cell.report.meta("ablation.value") == cell.value);
    CHECK(cell.report.has("zeroshot.M1_vs_T.accuracy"));
  }
  const std::size_t metrics = r.cells[0].report.metrics().size() + r.cells[0].report.flags().size();
  CHECK(count_lines(r.long_csv()) == 1 + 6 * metrics);
  CHECK(count_lines(r.summary_csv()) == 1 + 3 * metrics);
  CHECK(r.summary_csv().find("hub_capacity,256,zeroshot.M1_vs_T.accuracy,") != std::string::npos);
}

TEST_CASE("a failing cell is recorded and the rest still run") {
  // An observation scale this large overflows to inf and training aborts.
  const AblationSuite suite{AblationAxis::kNoiseStrength, {0.05, 1e308, 0.2}, {0}};
  const AblationResult r = run_ablation(tiny_base(), suite, 1);
  REQUIRE(r.cells.size() == 3);
  CHECK(r.cells[0].ok);
  CHECK(!r.cells[1].ok);
  CHECK(!r.cells[1].error.empty());
  CHECK(r.cells[2].ok);
  CHECK(r.long_csv().find(",error,") != std::string::npos);
  CHECK(r.summary_json().at("rows")[1].at("n_failed") == 1);
}

TEST_CASE("results do not depend on the number of worker threads") {
  const AblationSuite suite{AblationAxis::kBatchSize, {8, 64}, {0, 1}};
  const AblationResult serial = run_ablation(tiny_base(), suite, 1);
  const AblationResult parallel = run_ablation(tiny_base(), suite, 3);
  CHECK(serial.long_csv() == parallel.long_csv());
  CHECK(serial.summary_csv() == parallel.summary_csv());
}
