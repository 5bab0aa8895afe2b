#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rrlab/ensemble.hpp"
#include "rrlab/parallel.hpp"
#include "rrlab/ppo.hpp"
#include "rrlab/rewardnet.hpp"
#include "rrlab/toyworld.hpp"

namespace rrlab {

enum class Scenario { standard, robust_toy, lambda_sweep, minmax, stochastic, ablation_mean, lemma1, drift };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);
const std::vector<Scenario>& all_scenarios();

// Invalid scenario configuration. `key` is the dotted path at fault, if any.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, std::string key = {}) : std::invalid_argument(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Complete configuration for a scenario; every accepted key appears here.
json default_config(Scenario s);

// Recursively overlays `overlay` onto `base`. Keys absent from `base` and
// type mismatches throw ConfigError. Arrays are replaced wholesale.
json merge_config(const json& base, const json& overlay, const std::string& path = "");

// Applies "dotted.key=value". The value is parsed as JSON when possible and
// taken as a string otherwise.
void apply_override(json& config, const std::string& assignment);

enum class SetChoice { seed_ensemble, brme };

struct LemmaSettings {
  std::size_t probes = 50;
  double c_min = -5.0;
  double c_max = 5.0;
  double gamma_max = 0.99;
  // beta used by the logged, non-asserted KL control.
  double control_beta = 0.05;
};

struct DriftSettings {
  double beta = 0.1;
  std::size_t steps = 200;
  double perturbation = 1.0;
  std::size_t response = 0;
};

struct WarmupSettings {
  std::size_t steps = 200;
  double beta = 0.5;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::standard;
  std::size_t k = 8;
  GoldenVariant golden = GoldenVariant::zero_one;
  std::vector<std::uint64_t> seeds;
  // A "majority of seeds" verdict needs ceil(majority_fraction * seeds) wins.
  double majority_fraction = 0.6;
  std::size_t steps = 400;
  std::size_t short_steps = 100;
  // Sampling stride for accuracy-vs-step figures.
  std::size_t eval_every = 10;
  double lambda = 0.4;
  std::vector<double> lambdas;
  std::size_t n_sources = 3;
  SetChoice uncertainty_set = SetChoice::seed_ensemble;
  CriticMode critic = CriticMode::learned;
  Stage1Config stage1;
  BrmeConfig brme;
  Stage2Config stage2;
  PpoConfig ppo;
  WarmupSettings warmup;
  LemmaSettings lemma1;
  DriftSettings drift;
  json raw;

  std::size_t majority() const;
};

// Validates a fully merged config. Throws ConfigError naming the bad key.
ScenarioConfig parse_scenario_config(const json& merged);

// default_config(scenario) overlaid with `user`, then parsed.
ScenarioConfig load_scenario_config(Scenario s, const json& user = json::object());

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ArmSpec {
  std::string name;
  // True for arms under test; false for controls and extensions.
  bool primary = false;
  std::string role;
};

// Arms a scenario runs under `cfg`, in report order.
std::vector<ArmSpec> arm_registry(const ScenarioConfig& cfg);

struct ArmResult {
  ArmSpec spec;
  // One record per configured seed, in config order.
  std::vector<RunRecord> runs;
};

struct Verdict {
  std::string name;
  bool pass = false;
  // Gating verdicts decide the run's exit status; the rest are logged only.
  bool gating = true;
  std::string claim;
  json measured;
};

struct ScenarioReport {
  ScenarioConfig config;
  std::vector<ArmResult> arms;
  std::vector<Verdict> verdicts;
  // Scenario-specific tables, each an array of row objects.
  json tables = json::object();
  std::vector<std::pair<std::string, Matrix>> matrices;
  std::vector<std::pair<std::string, json>> checkpoints;
  std::vector<std::pair<std::string, RewardRangeStats>> ranges;
  // Extra CSV files keyed by relative path under metrics/.
  std::vector<std::pair<std::string, std::string>> extra_csv;

  const ArmResult& arm(const std::string& name) const;
  bool all_gating_pass() const;
};

struct ArmSummary {
  std::string name;
  bool primary = false;
  std::size_t seeds = 0;
  double mean_final = 0.0;
  double std_final = 0.0;
  double median_final = 0.0;
  double mean_short = 0.0;
};

std::vector<ArmSummary> summarize_arms(const ScenarioReport& report);
double median(std::vector<double> values);

// Std of accuracy over the last third of training.
double late_accuracy_std(const RunRecord& record);
// Accuracy lost from the first to the last step.
double degradation(const RunRecord& record);

using RunMetric = std::function<double(const RunRecord&)>;

struct Comparison {
  std::string arm_a;
  std::string arm_b;
  std::string metric;
  std::vector<std::uint64_t> seeds;
  std::vector<double> a;
  std::vector<double> b;
  std::size_t a_greater = 0;
  std::size_t b_greater = 0;
  std::size_t ties = 0;
  // mean(a - b)
  double mean_diff = 0.0;
  // arm_a, arm_b, or "tie"
  std::string verdict;
};

// Paired per-seed comparison. Throws std::invalid_argument when the arms'
// seed lists differ.
Comparison compare_arms(const ScenarioReport& report, const std::string& arm_a, const std::string& arm_b,
                        const std::string& metric_name, const RunMetric& metric);
// Named metrics: final_accuracy, short_accuracy, late_std, degradation.
Comparison compare_arms(const ScenarioReport& report, const std::string& arm_a, const std::string& arm_b,
                        const std::string& metric_name);

json to_json(const Comparison& c);
json to_json(const Verdict& v);
// Config, arm summaries, tables and verdicts; consumed by the report command.
json summary_json(const ScenarioReport& report);

// E[min of n iid N(0,1)] by quadrature.
double expected_min_standard_normal(std::size_t n);

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

// Runs are fanned out over (arm, seed) with for_each_index; results do not
// depend on `exec`.
ScenarioReport run_standard(const ScenarioConfig& cfg, Exec exec = Exec::parallel);
ScenarioReport run_robust_toy(const ScenarioConfig& cfg, Exec exec = Exec::parallel);
ScenarioReport run_lambda_sweep(const ScenarioConfig& cfg, Exec exec = Exec::parallel);
ScenarioReport run_minmax(const ScenarioConfig& cfg, Exec exec = Exec::parallel);
ScenarioReport run_stochastic(const ScenarioConfig& cfg, Exec exec = Exec::parallel);
ScenarioReport run_ablation_mean(const ScenarioConfig& cfg, Exec exec = Exec::parallel);
ScenarioReport run_lemma1(const ScenarioConfig& cfg, Exec exec = Exec::parallel);
ScenarioReport run_drift(const ScenarioConfig& cfg, Exec exec = Exec::parallel);

ScenarioReport run_scenario(const ScenarioConfig& cfg, Exec exec = Exec::parallel);

}  // namespace rrlab
