#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"

#include "rrlab/labs.hpp"
#include "rrlab/parallel.hpp"
#include "rrlab/tolerances.hpp"

using namespace rrlab;

namespace {

RunRecord record(std::uint64_t seed, std::vector<double> accuracy, double initial = 0.0) {
  RunRecord r;
  r.seed = seed;
  r.initial_accuracy = initial;
  for (std::size_t i = 0; i < accuracy.size(); ++i) r.steps.push_back({i + 1, accuracy[i], 0, 0, 0, 0, 0});
  return r;
}

ScenarioReport two_arm_report(const std::vector<double>& a, const std::vector<double>& b) {
  ScenarioReport rep;
  ArmResult x{{"a", true, ""}, {}}, y{{"b", false, ""}, {}};
  for (std::size_t s = 0; s < a.size(); ++s) {
    x.runs.push_back(record(s, {a[s]}));
    y.runs.push_back(record(s, {b[s]}));
  }
  rep.arms = {x, y};
  return rep;
}

ScenarioConfig small(Scenario s, json overlay) {
  overlay["seeds"] = {0, 1};
  return load_scenario_config(s, overlay);
}

bool same_runs(const ArmResult& a, const ArmResult& b) {
  if (a.runs.size() != b.runs.size()) return false;
  for (std::size_t i = 0; i < a.runs.size(); ++i)
    if (to_csv(a.runs[i]) != to_csv(b.runs[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("scenario names round-trip") {
  for (auto s : all_scenarios()) CHECK(scenario_from_string(to_string(s)) == s);
  CHECK(all_scenarios().size() == 8);
  CHECK_THROWS_AS(scenario_from_string("bogus"), ConfigError);
}

TEST_CASE("every scenario's default config parses") {
  for (auto s : all_scenarios()) {
    const auto cfg = load_scenario_config(s);
    CHECK(cfg.scenario == s);
    CHECK(cfg.seeds.size() == 10);
    CHECK(cfg.majority() == 6);
    // The lemma scenario has probes rather than training arms.
    CHECK(arm_registry(cfg).empty() == (s == Scenario::lemma1));
  }
}

TEST_CASE("merge rejects unknown keys and type mismatches") {
  const json base = default_config(Scenario::standard);
  const auto merged = merge_config(base, json{{"ppo", {{"beta", 0.2}}}, {"steps", 50}});
  CHECK(merged["ppo"]["beta"] == 0.2);
  CHECK(merged["ppo"]["clip_eps"] == base["ppo"]["clip_eps"]);
  CHECK(merged["steps"] == 50);
  // Integers are accepted where reals are expected.
  CHECK_NOTHROW(merge_config(base, json{{"lambda", 1}}));

  try {
    merge_config(base, json{{"ppo", {{"betta", 0.2}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "ppo.betta");
  }
  try {
    merge_config(base, json{{"ppo", {{"beta", "high"}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "ppo.beta");
  }
  CHECK_THROWS_AS(merge_config(base, json{{"ppo", 3}}), ConfigError);
  CHECK_THROWS_AS(merge_config(base, json::array()), ConfigError);
}

TEST_CASE("overrides") {
  json cfg = default_config(Scenario::robust_toy);
  apply_override(cfg, "lambda=0.6");
  apply_override(cfg, "ppo.normalize_advantages=false");
  apply_override(cfg, "seeds=[3,4]");
  apply_override(cfg, "golden=margin");
  CHECK(cfg["lambda"] == 0.6);
  CHECK(cfg["ppo"]["normalize_advantages"] == false);
  CHECK(cfg["seeds"] == json::array({3, 4}));
  CHECK(cfg["golden"] == "margin");
  const auto parsed = parse_scenario_config(cfg);
  CHECK(parsed.golden == GoldenVariant::margin);
  CHECK(parsed.seeds == std::vector<std::uint64_t>{3, 4});

  CHECK_THROWS_AS(apply_override(cfg, "lambda"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "ppo.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "steps=many"), ConfigError);
}

TEST_CASE("parse rejects invalid values with the offending key") {
  auto key_of = [](json overlay) -> std::string {
    try {
      load_scenario_config(Scenario::lambda_sweep, overlay);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return "";
  };
  CHECK(key_of({{"lambda", 1.5}}) == "lambda");
  CHECK(key_of({{"lambdas", {0.2, 1.2}}}) == "lambdas");
  CHECK(key_of({{"seeds", json::array()}}) == "seeds");
  CHECK(key_of({{"seeds", {1, 1}}}) == "seeds");
  CHECK(key_of({{"seeds", {-1}}}) == "seeds");
  CHECK(key_of({{"k", 1}}) == "k");
  CHECK(key_of({{"short_steps", 500}}) == "short_steps");
  CHECK(key_of({{"critic", "oracle"}}) == "critic");
  CHECK(key_of({{"rm", {{"activation", "gelu"}}}}) == "rm.activation");
  CHECK(key_of({{"brme", {{"n_heads", 1}}}}) == "brme.n_heads");
  CHECK(key_of({{"scenario", "minmax"}}) == "scenario");
  CHECK(key_of({{"steps", 2.5}}) == "steps");
  CHECK(key_of(json::object()).empty());
}

TEST_CASE("median and majority") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({1.0, 0.75, 1.0, 0.5}) == 0.875);
  ScenarioConfig c;
  c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  c.majority_fraction = 0.6;
  CHECK(c.majority() == 6);
  c.seeds = {0};
  CHECK(c.majority() == 1);
}

TEST_CASE("late std and degradation") {
  const auto r = record(0, {0.5, 0.5, 0.5, 1.0, 0.0, 1.0}, 0.75);
  // Last third: {0.0, 1.0}.
  CHECK(std::abs(late_accuracy_std(r) - std::sqrt(0.5)) < 1e-12);
  CHECK(degradation(r) == 0.75 - 1.0);
  CHECK(late_accuracy_std(record(0, {1, 1, 1, 1, 1, 1})) == 0.0);
}

TEST_CASE("compare arms fixtures") {
  const std::vector<double> base{0.5, 0.625, 0.75, 0.875, 1.0, 0.5, 0.625, 0.75, 0.875, 0.25};
  const auto same = compare_arms(two_arm_report(base, base), "a", "b", "final_accuracy");
  CHECK(same.verdict == "tie");
  CHECK(same.ties == 10);
  CHECK(same.mean_diff == 0.0);

  std::vector<double> shifted = base;
  for (auto& v : shifted) v += 0.1;
  const auto up = compare_arms(two_arm_report(shifted, base), "a", "b", "final_accuracy");
  CHECK(up.verdict == "a");
  CHECK(up.a_greater == 10);
  CHECK(std::abs(up.mean_diff - 0.1) < 1e-12);
  const auto down = compare_arms(two_arm_report(base, shifted), "a", "b", "final_accuracy");
  CHECK(down.verdict == "b");
  CHECK(down.b_greater == 10);

  auto bad = two_arm_report(base, base);
  bad.arms[1].runs[3].seed = 42;
  CHECK_THROWS_AS(compare_arms(bad, "a", "b", "final_accuracy"), std::invalid_argument);
  bad.arms[1].runs.pop_back();
  CHECK_THROWS_AS(compare_arms(bad, "a", "b", "final_accuracy"), std::invalid_argument);
  CHECK_THROWS(compare_arms(two_arm_report(base, base), "a", "b", "no_such_metric"));
  CHECK_THROWS(compare_arms(two_arm_report(base, base), "a", "zzz", "final_accuracy"));

  const auto j = to_json(up);
  CHECK(j.at("verdict") == "a");
  CHECK(j.at("a").size() == 10);
}

TEST_CASE("expected minimum of standard normals by quadrature") {
  CHECK(std::abs(expected_min_standard_normal(1)) < 1e-9);
  CHECK(std::abs(expected_min_standard_normal(2) + 1.0 / std::sqrt(std::numbers::pi)) < 1e-9);
  CHECK(std::abs(expected_min_standard_normal(5) + 1.1629644736) < 1e-8);
  const Moments mc = monte_carlo_moments(400000, 7, [](Rng& rng) {
    double m = rng.normal();
    for (int i = 1; i < 5; ++i) m = std::min(m, rng.normal());
    return m;
  });
  CHECK(std::abs(mc.mean() - expected_min_standard_normal(5)) < 4.0 * mc.std_error());
}

TEST_CASE("lemma scenario passes its verdicts") {
  const auto rep = run_scenario(load_scenario_config(Scenario::lemma1));
  CHECK(rep.all_gating_pass());
  CHECK(rep.tables.at("lemma1").size() == 50);
  for (const auto& v : rep.verdicts)
    if (v.gating) CHECK_MESSAGE(v.pass, v.name);
}

TEST_CASE("single-source minmax arms coincide") {
  const auto cfg = small(Scenario::minmax, {{"n_sources", 1}, {"steps", 30}, {"short_steps", 10}, {"rm", {{"steps", 100}}}});
  const auto rep = run_minmax(cfg);
  CHECK(same_runs(rep.arm("min"), rep.arm("max")));
  CHECK(same_runs(rep.arm("min"), rep.arm("mean")));
}

TEST_CASE("serial and parallel fan-out agree") {
  const auto cfg = small(Scenario::stochastic, {{"steps", 30}, {"short_steps", 10}, {"warmup", {{"steps", 20}}}});
  const auto a = run_scenario(cfg, Exec::serial);
  const auto b = run_scenario(cfg, Exec::parallel);
  REQUIRE(a.arms.size() == b.arms.size());
  for (std::size_t i = 0; i < a.arms.size(); ++i) CHECK(same_runs(a.arms[i], b.arms[i]));
  CHECK(summary_json(a) == summary_json(b));
}

TEST_CASE("robust scenario report is complete") {
  const auto cfg = small(Scenario::robust_toy, {{"steps", 30}, {"short_steps", 10}, {"rm", {{"steps", 100}}}});
  const auto rep = run_robust_toy(cfg);
  const auto specs = arm_registry(cfg);
  REQUIRE(rep.arms.size() == specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(rep.arms[i].spec.name == specs[i].name);
    CHECK(rep.arms[i].runs.size() == 2);
    for (const auto& run : rep.arms[i].runs) CHECK(run.steps.size() == 30);
  }
  CHECK(same_runs(rep.arm("standard"), rep.arm("lambda1")));
  bool found = false;
  for (const auto& v : rep.verdicts) {
    CHECK_FALSE(v.measured.is_null());
    if (v.name == "blend_identity") found = v.pass;
  }
  CHECK(found);
  const auto s = summary_json(rep);
  CHECK(s.contains("verdicts"));
  CHECK(s.contains("arms"));
  const auto sums = summarize_arms(rep);
  CHECK(sums.size() == 3);
}
