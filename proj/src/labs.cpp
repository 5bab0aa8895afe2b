#include "rrlab/labs.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "rrlab/io.hpp"
#include "rrlab/tolerances.hpp"

namespace rrlab {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::standard: return "standard";
    case Scenario::robust_toy: return "robust_toy";
    case Scenario::lambda_sweep: return "lambda_sweep";
    case Scenario::minmax: return "minmax";
    case Scenario::stochastic: return "stochastic";
    case Scenario::ablation_mean: return "ablation_mean";
    case Scenario::lemma1: return "lemma1";
    case Scenario::drift: return "drift";
  }
  return "unknown";
}

const std::vector<Scenario>& all_scenarios() {
  static const std::vector<Scenario> all{Scenario::standard,   Scenario::robust_toy,    Scenario::lambda_sweep,
                                         Scenario::minmax,     Scenario::stochastic,    Scenario::ablation_mean,
                                         Scenario::lemma1,     Scenario::drift};
  return all;
}

Scenario scenario_from_string(const std::string& s) {
  for (Scenario sc : all_scenarios()) {
    if (to_string(sc) == s) return sc;
  }
  throw ConfigError("unknown scenario '" + s + "'", "scenario");
}

// ----------------------------- config -----------------------------

namespace {

json base_defaults() {
  PpoConfig ppo;
  ppo.policy_hidden_layers = 0;
  ppo.actor_lr = 0.03;
  ppo.normalize_advantages = true;
  json seeds = json::array();
  for (int i = 0; i < 10; ++i) seeds.push_back(i);
  return json{
      {"scenario", "standard"},
      {"k", 8},
      {"golden", "zero_one"},
      {"seeds", seeds},
      {"majority_fraction", 0.6},
      {"steps", 400},
      {"short_steps", 100},
      {"eval_every", 10},
      {"lambda", 0.4},
      {"lambdas", {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}},
      {"n_sources", 3},
      {"uncertainty_set", "seed_ensemble"},
      {"critic", "learned"},
      {"rm",
       {{"hidden_width", 16},
        {"hidden_layers", 2},
        {"activation", "relu"},
        {"output_scale", 1.0},
        {"steps", 400},
        {"batch_size", 0},
        {"lr", 0.01}}},
      {"brme",
       {{"n_heads", 5},
        {"trunk_init", "stage1"},
        {"train_trunk", false},
        {"trunk_width", 32},
        {"head_width", 16},
        {"activation", "relu"},
        {"sigma_floor", 1e-4},
        {"steps", 300},
        {"alpha", 2.0},
        {"loss_mode", "separated"},
        {"lr", 3e-3}}},
      {"ppo", to_json(ppo)},
      {"warmup", {{"steps", 200}, {"beta", 0.5}}},
      {"lemma1", {{"probes", 50}, {"c_min", -5.0}, {"c_max", 5.0}, {"gamma_max", 0.99}, {"control_beta", 0.05}}},
      {"drift", {{"beta", 0.1}, {"steps", 200}, {"perturbation", 1.0}, {"response", 0}}},
  };
}

const char* type_name(const json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

std::string join_path(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json& field(const json& obj, const std::string& key, const std::string& path) {
  const std::string full = join_path(path, key);
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError("missing key '" + full + "'", full);
  return obj.at(key);
}

double get_real(const json& obj, const std::string& key, const std::string& path = "") {
  const json& v = field(obj, key, path);
  if (!v.is_number()) throw ConfigError("'" + join_path(path, key) + "' must be a number", join_path(path, key));
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError("'" + join_path(path, key) + "' must be finite", join_path(path, key));
  return d;
}

std::size_t get_count(const json& obj, const std::string& key, const std::string& path = "") {
  const json& v = field(obj, key, path);
  const std::string full = join_path(path, key);
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
  throw ConfigError("'" + full + "' must be a non-negative integer", full);
}

std::string get_string(const json& obj, const std::string& key, const std::string& path = "") {
  const json& v = field(obj, key, path);
  if (!v.is_string()) throw ConfigError("'" + join_path(path, key) + "' must be a string", join_path(path, key));
  return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& path = "") {
  const json& v = field(obj, key, path);
  if (!v.is_boolean()) throw ConfigError("'" + join_path(path, key) + "' must be a boolean", join_path(path, key));
  return v.get<bool>();
}

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError("'" + key + "' " + message, key);
}

template <typename F>
auto convert(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("'" + key + "': " + e.what(), key);
  }
}

}  // namespace

json default_config(Scenario s) {
  json j = base_defaults();
  j["scenario"] = to_string(s);
  switch (s) {
    case Scenario::minmax: j["n_sources"] = 5; break;
    case Scenario::stochastic:
      j["n_sources"] = 5;
      j["critic"] = "exact";
      j["ppo"]["normalize_advantages"] = false;
      break;
    case Scenario::ablation_mean: j["uncertainty_set"] = "brme"; break;
    case Scenario::drift: j["ppo"]["normalize_advantages"] = false; break;
    default: break;
  }
  return j;
}

json merge_config(const json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object()) {
    throw ConfigError(path.empty() ? "config must be a JSON object" : "'" + path + "' must be an object", path);
  }
  json out = base;
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = join_path(path, it.key());
    if (!base.contains(it.key())) throw ConfigError("unknown key '" + key + "'", key);
    const json& b = base.at(it.key());
    if (!same_kind(b, it.value())) {
      throw ConfigError("'" + key + "' must be a " + std::string(type_name(b)) + ", got " + type_name(it.value()), key);
    }
    out[it.key()] = b.is_object() ? merge_config(b, it.value(), key) : it.value();
  }
  return out;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown key '" + key + "'", key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!same_kind(*node, value)) {
    throw ConfigError("'" + key + "' must be a " + std::string(type_name(*node)) + ", got " + type_name(value), key);
  }
  if (node->is_object()) {
    *node = merge_config(*node, value, key);
  } else {
    *node = value;
  }
}

std::size_t ScenarioConfig::majority() const {
  const double need = std::ceil(majority_fraction * static_cast<double>(seeds.size()) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(need));
}

ScenarioConfig parse_scenario_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ScenarioConfig c;
  c.raw = j;
  c.scenario = scenario_from_string(get_string(j, "scenario"));
  c.k = get_count(j, "k");
  require(c.k >= 2, "k", "must be at least 2");
  c.golden = convert("golden", [&] { return golden_variant_from_string(get_string(j, "golden")); });

  const json& seeds = field(j, "seeds", "");
  require(seeds.is_array() && !seeds.empty(), "seeds", "must be a non-empty array");
  std::set<std::uint64_t> seen;
  for (const auto& s : seeds) {
    require(s.is_number_unsigned() || (s.is_number_integer() && s.get<std::int64_t>() >= 0), "seeds",
            "entries must be non-negative integers");
    const auto v = s.get<std::uint64_t>();
    require(seen.insert(v).second, "seeds", "contains duplicate seed " + std::to_string(v));
    c.seeds.push_back(v);
  }
  c.majority_fraction = get_real(j, "majority_fraction");
  require(c.majority_fraction > 0.0 && c.majority_fraction <= 1.0, "majority_fraction", "must lie in (0, 1]");
  c.steps = get_count(j, "steps");
  require(c.steps >= 1, "steps", "must be at least 1");
  c.short_steps = get_count(j, "short_steps");
  require(c.short_steps >= 1 && c.short_steps <= c.steps, "short_steps", "must lie in [1, steps]");
  c.eval_every = get_count(j, "eval_every");
  require(c.eval_every >= 1, "eval_every", "must be at least 1");
  c.lambda = get_real(j, "lambda");
  require(c.lambda >= 0.0 && c.lambda <= 1.0, "lambda", "must lie in [0, 1]");
  const json& lambdas = field(j, "lambdas", "");
  require(lambdas.is_array() && !lambdas.empty(), "lambdas", "must be a non-empty array");
  for (const auto& l : lambdas) {
    require(l.is_number(), "lambdas", "entries must be numbers");
    const double v = l.get<double>();
    require(v >= 0.0 && v <= 1.0, "lambdas", "entries must lie in [0, 1]");
    for (double prev : c.lambdas) require(format_fixed(prev, 2) != format_fixed(v, 2), "lambdas", "contains duplicates");
    c.lambdas.push_back(v);
  }
  c.n_sources = get_count(j, "n_sources");
  require(c.n_sources >= 1, "n_sources", "must be at least 1");
  const std::string set = get_string(j, "uncertainty_set");
  require(set == "seed_ensemble" || set == "brme", "uncertainty_set", "must be 'seed_ensemble' or 'brme'");
  c.uncertainty_set = set == "brme" ? SetChoice::brme : SetChoice::seed_ensemble;
  const std::string critic = get_string(j, "critic");
  require(critic == "learned" || critic == "exact", "critic", "must be 'learned' or 'exact'");
  c.critic = critic == "exact" ? CriticMode::exact : CriticMode::learned;

  const json& rm = field(j, "rm", "");
  c.stage1.net.hidden_width = get_count(rm, "hidden_width", "rm");
  c.stage1.net.hidden_layers = get_count(rm, "hidden_layers", "rm");
  c.stage1.net.activation = convert("rm.activation", [&] { return activation_from_string(get_string(rm, "activation", "rm")); });
  c.stage1.net.output_scale = get_real(rm, "output_scale", "rm");
  c.stage1.steps = get_count(rm, "steps", "rm");
  c.stage1.batch_size = get_count(rm, "batch_size", "rm");
  c.stage1.adam.learning_rate = get_real(rm, "lr", "rm");
  require(c.stage1.net.hidden_width >= 1, "rm.hidden_width", "must be at least 1");
  require(c.stage1.steps >= 1, "rm.steps", "must be at least 1");
  require(c.stage1.adam.learning_rate > 0.0, "rm.lr", "must be positive");

  const json& b = field(j, "brme", "");
  c.brme.n_heads = get_count(b, "n_heads", "brme");
  c.brme.trunk_init = convert("brme.trunk_init", [&] { return trunk_init_from_string(get_string(b, "trunk_init", "brme")); });
  c.stage2.train_trunk = get_bool(b, "train_trunk", "brme");
  c.brme.trunk_width = get_count(b, "trunk_width", "brme");
  c.brme.head_width = get_count(b, "head_width", "brme");
  c.brme.activation = convert("brme.activation", [&] { return activation_from_string(get_string(b, "activation", "brme")); });
  c.brme.sigma_floor = get_real(b, "sigma_floor", "brme");
  c.stage2.steps = get_count(b, "steps", "brme");
  c.stage2.alpha = get_real(b, "alpha", "brme");
  c.stage2.mode = convert("brme.loss_mode", [&] { return mse_loss_mode_from_string(get_string(b, "loss_mode", "brme")); });
  c.stage2.adam.learning_rate = get_real(b, "lr", "brme");
  require(c.brme.n_heads >= 2, "brme.n_heads", "must be at least 2");
  require(c.brme.trunk_width >= 1 && c.brme.head_width >= 1, "brme.trunk_width", "widths must be at least 1");
  require(c.brme.sigma_floor > 0.0, "brme.sigma_floor", "must be positive");
  require(c.stage2.alpha > 0.0, "brme.alpha", "must be positive");
  require(c.stage2.adam.learning_rate > 0.0, "brme.lr", "must be positive");
  require(c.brme.trunk_init == TrunkInit::random || c.stage1.net.hidden_layers == 2, "brme.trunk_init",
          "stage1 needs rm.hidden_layers = 2");

  c.ppo = convert("ppo", [&] { return ppo_config_from_json(field(j, "ppo", "")); });

  const json& w = field(j, "warmup", "");
  c.warmup.steps = get_count(w, "steps", "warmup");
  c.warmup.beta = get_real(w, "beta", "warmup");
  require(c.warmup.steps >= 1, "warmup.steps", "must be at least 1");
  require(c.warmup.beta >= 0.0, "warmup.beta", "must be non-negative");

  const json& l = field(j, "lemma1", "");
  c.lemma1.probes = get_count(l, "probes", "lemma1");
  c.lemma1.c_min = get_real(l, "c_min", "lemma1");
  c.lemma1.c_max = get_real(l, "c_max", "lemma1");
  c.lemma1.gamma_max = get_real(l, "gamma_max", "lemma1");
  c.lemma1.control_beta = get_real(l, "control_beta", "lemma1");
  require(c.lemma1.probes >= 1, "lemma1.probes", "must be at least 1");
  require(c.lemma1.c_min <= c.lemma1.c_max, "lemma1.c_min", "must not exceed lemma1.c_max");
  require(c.lemma1.gamma_max >= 0.0 && c.lemma1.gamma_max < 1.0, "lemma1.gamma_max", "must lie in [0, 1)");
  require(c.lemma1.control_beta > 0.0, "lemma1.control_beta", "must be positive");

  const json& d = field(j, "drift", "");
  c.drift.beta = get_real(d, "beta", "drift");
  c.drift.steps = get_count(d, "steps", "drift");
  c.drift.perturbation = get_real(d, "perturbation", "drift");
  c.drift.response = get_count(d, "response", "drift");
  require(c.drift.beta >= 0.0, "drift.beta", "must be non-negative");
  require(c.drift.steps >= 1, "drift.steps", "must be at least 1");
  require(c.drift.response < c.k, "drift.response", "must be below k");
  return c;
}

ScenarioConfig load_scenario_config(Scenario s, const json& user) {
  json merged = merge_config(default_config(s), user);
  if (merged.at("scenario") != to_string(s)) {
    throw ConfigError("config is for scenario '" + merged.at("scenario").get<std::string>() + "', not '" +
                          to_string(s) + "'",
                      "scenario");
  }
  return parse_scenario_config(merged);
}

// ----------------------------- report helpers -----------------------------

const ArmResult& ScenarioReport::arm(const std::string& name) const {
  for (const auto& a : arms) {
    if (a.spec.name == name) return a;
  }
  throw std::invalid_argument("report has no arm '" + name + "'");
}

bool ScenarioReport::all_gating_pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return !v.gating || v.pass; });
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> finals(const ArmResult& arm) {
  std::vector<double> out;
  for (const auto& r : arm.runs) out.push_back(r.final_accuracy());
  return out;
}

std::vector<double> metric_values(const ArmResult& arm, const RunMetric& metric) {
  std::vector<double> out;
  for (const auto& r : arm.runs) out.push_back(metric(r));
  return out;
}

std::string seed_name(std::uint64_t seed) { return "seed" + std::to_string(seed); }

}  // namespace

std::vector<ArmSummary> summarize_arms(const ScenarioReport& report) {
  std::vector<ArmSummary> out;
  for (const auto& arm : report.arms) {
    ArmSummary s;
    s.name = arm.spec.name;
    s.primary = arm.spec.primary;
    s.seeds = arm.runs.size();
    if (!arm.runs.empty()) {
      const auto f = finals(arm);
      s.mean_final = mean_of(f);
      s.std_final = std_of(f);
      s.median_final = median(f);
      std::vector<double> sh;
      for (const auto& r : arm.runs) sh.push_back(r.accuracy_at(std::min(report.config.short_steps, r.steps.size())));
      s.mean_short = mean_of(sh);
    }
    out.push_back(s);
  }
  return out;
}

double late_accuracy_std(const RunRecord& record) {
  const std::size_t n = record.steps.size();
  if (n < 3) return 0.0;
  std::vector<double> tail;
  for (std::size_t i = n - n / 3; i < n; ++i) tail.push_back(record.steps[i].accuracy);
  return std_of(tail);
}

double degradation(const RunRecord& record) { return record.initial_accuracy - record.final_accuracy(); }

Comparison compare_arms(const ScenarioReport& report, const std::string& arm_a, const std::string& arm_b,
                        const std::string& metric_name, const RunMetric& metric) {
  const ArmResult& a = report.arm(arm_a);
  const ArmResult& b = report.arm(arm_b);
  Comparison c;
  c.arm_a = arm_a;
  c.arm_b = arm_b;
  c.metric = metric_name;
  if (a.runs.size() != b.runs.size()) throw std::invalid_argument("compare_arms: arms have different seed counts");
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    if (a.runs[i].seed != b.runs[i].seed) {
      throw std::invalid_argument("compare_arms: unmatched seeds " + std::to_string(a.runs[i].seed) + " and " +
                                  std::to_string(b.runs[i].seed));
    }
    c.seeds.push_back(a.runs[i].seed);
  }
  c.a = metric_values(a, metric);
  c.b = metric_values(b, metric);
  double diff = 0.0;
  for (std::size_t i = 0; i < c.a.size(); ++i) {
    if (c.a[i] > c.b[i]) {
      ++c.a_greater;
    } else if (c.b[i] > c.a[i]) {
      ++c.b_greater;
    } else {
      ++c.ties;
    }
    diff += c.a[i] - c.b[i];
  }
  c.mean_diff = c.a.empty() ? 0.0 : diff / static_cast<double>(c.a.size());
  c.verdict = c.a_greater > c.b_greater ? arm_a : c.b_greater > c.a_greater ? arm_b : "tie";
  return c;
}

Comparison compare_arms(const ScenarioReport& report, const std::string& arm_a, const std::string& arm_b,
                        const std::string& metric_name) {
  RunMetric m;
  if (metric_name == "final_accuracy") {
    m = [](const RunRecord& r) { return r.final_accuracy(); };
  } else if (metric_name == "short_accuracy") {
    const std::size_t s = report.config.short_steps;
    m = [s](const RunRecord& r) { return r.accuracy_at(std::min(s, r.steps.size())); };
  } else if (metric_name == "late_std") {
    m = late_accuracy_std;
  } else if (metric_name == "degradation") {
    m = degradation;
  } else {
    throw std::invalid_argument("compare_arms: unknown metric '" + metric_name + "'");
  }
  return compare_arms(report, arm_a, arm_b, metric_name, m);
}

json to_json(const Comparison& c) {
  return json{{"arm_a", c.arm_a}, {"arm_b", c.arm_b},         {"metric", c.metric},       {"seeds", c.seeds},
              {"a", c.a},         {"b", c.b},                 {"a_greater", c.a_greater}, {"b_greater", c.b_greater},
              {"ties", c.ties},   {"mean_diff", c.mean_diff}, {"verdict", c.verdict}};
}

json to_json(const Verdict& v) {
  return json{{"name", v.name}, {"pass", v.pass}, {"gating", v.gating}, {"claim", v.claim}, {"measured", v.measured}};
}

json summary_json(const ScenarioReport& report) {
  json arms = json::array();
  for (const auto& s : summarize_arms(report)) {
    arms.push_back({{"arm", s.name},
                    {"primary", s.primary},
                    {"seeds", s.seeds},
                    {"mean_final_accuracy", s.mean_final},
                    {"std_final_accuracy", s.std_final},
                    {"median_final_accuracy", s.median_final},
                    {"mean_short_accuracy", s.mean_short}});
  }
  json roles = json::array();
  for (const auto& a : report.arms) roles.push_back({{"arm", a.spec.name}, {"primary", a.spec.primary}, {"role", a.spec.role}});
  json verdicts = json::array();
  for (const auto& v : report.verdicts) verdicts.push_back(to_json(v));
  return json{{"scenario", to_string(report.config.scenario)},
              {"seeds", report.config.seeds},
              {"arms", arms},
              {"arm_roles", roles},
              {"tables", report.tables},
              {"verdicts", verdicts},
              {"all_gating_pass", report.all_gating_pass()}};
}

double expected_min_standard_normal(std::size_t n) {
  if (n < 1) throw std::invalid_argument("expected_min_standard_normal: n must be at least 1");
  // Simpson's rule on [-12, 12]; the integrand is negligible outside.
  const int m = 24000;
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / m;
  auto f = [n](double x) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double tail = 0.5 * std::erfc(x / std::numbers::sqrt2);
    return x * static_cast<double>(n) * pdf * std::pow(tail, static_cast<double>(n - 1));
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < m; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

// ----------------------------- scenario plumbing -----------------------------

namespace {

struct SeedContext {
  std::uint64_t seed = 0;
  ToyWorld world;
  PreferenceDataset dataset;
  std::shared_ptr<const ScalarRewardModel> rm;
  SeedEnsemble ensemble;
  std::shared_ptr<const BrmeModel> brme;
  Stage2Trace brme_trace;
  std::shared_ptr<const UncertaintySet> set;
  RewardSource nominal;
  PolicyModel policy;
};

enum Needs : unsigned { kRm = 1, kEnsemble = 2, kBrme = 4 };

SeedContext build_context(const ScenarioConfig& cfg, std::uint64_t seed, unsigned needs) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.world = make_world(cfg.k, cfg.golden);
  if (needs & (kRm | kEnsemble | kBrme)) {
    Rng data_rng(derive_seed(seed, "data"));
    ctx.dataset = annotate(ctx.world, data_rng);
    Rng rm_rng(derive_seed(seed, "rm"));
    ctx.rm = std::make_shared<const ScalarRewardModel>(train_stage1(ctx.world, ctx.dataset, cfg.stage1, rm_rng));
    ctx.nominal = scalar_rm_source(ctx.rm);
  }
  if (needs & kEnsemble) {
    ctx.ensemble = build_seed_ensemble(ctx.world, ctx.dataset, cfg.n_sources, cfg.stage1, derive_seed(seed, "ensemble"));
    ctx.set = std::make_shared<const UncertaintySet>(ctx.ensemble.set);
  }
  if (needs & kBrme) {
    Rng brme_rng(derive_seed(seed, "brme"));
    BrmeModel init = BrmeModel::initial(*ctx.rm, cfg.brme, brme_rng);
    const HeadAssignment assignment = partition_dataset(ctx.dataset.size(), cfg.brme.n_heads, brme_rng);
    ctx.brme = std::make_shared<const BrmeModel>(
        train_stage2(std::move(init), *ctx.rm, ctx.dataset, assignment, cfg.stage2, brme_rng, &ctx.brme_trace));
    ctx.set = std::make_shared<const UncertaintySet>(brme_head_set(ctx.brme));
    ctx.nominal = brme_nominal_source(ctx.brme);
  }
  Rng policy_rng(derive_seed(seed, "policy"));
  ctx.policy = PolicyModel::random(cfg.k, cfg.ppo, policy_rng);
  return ctx;
}

std::vector<SeedContext> build_contexts(const ScenarioConfig& cfg, unsigned needs, Exec exec) {
  std::vector<SeedContext> out(cfg.seeds.size());
  for_each_index(
      cfg.seeds.size(), [&](std::size_t i) { out[i] = build_context(cfg, cfg.seeds[i], needs); }, exec);
  return out;
}

unsigned set_needs(const ScenarioConfig& cfg) {
  return kRm | (cfg.uncertainty_set == SetChoice::brme ? kBrme : kEnsemble);
}

struct RunSpec {
  RewardSignal signal;
  CriticSpec critic;
  PolicyModel start;
  std::size_t steps = 0;
  PpoConfig ppo;
};

RunRecord execute(const RunSpec& spec, const std::string& label, std::uint64_t seed, const ToyWorld& world) {
  Rng rng(derive_seed(seed, "ppo"));
  RunRecord r = train(spec.start, spec.signal, world, spec.ppo, spec.steps, rng, spec.critic).record;
  r.label = label;
  r.seed = seed;
  return r;
}

using SpecFactory = std::function<RunSpec(std::size_t arm, const SeedContext& ctx)>;

// Fans (arm, seed) jobs out and assembles ArmResults in registry order.
std::vector<ArmResult> run_arms(const ScenarioConfig& cfg, const std::vector<ArmSpec>& specs,
                                const std::vector<SeedContext>& contexts, const SpecFactory& factory, Exec exec) {
  const std::size_t n_seeds = contexts.size();
  std::vector<ArmResult> arms(specs.size());
  for (std::size_t a = 0; a < specs.size(); ++a) {
    arms[a].spec = specs[a];
    arms[a].runs.resize(n_seeds);
  }
  for_each_index(
      specs.size() * n_seeds,
      [&](std::size_t job) {
        const std::size_t a = job / n_seeds;
        const std::size_t s = job % n_seeds;
        const RunSpec spec = factory(a, contexts[s]);
        arms[a].runs[s] = execute(spec, specs[a].name, contexts[s].seed, contexts[s].world);
      },
      exec);
  (void)cfg;
  return arms;
}

RunSpec standard_spec(const ScenarioConfig& cfg, const SeedContext& ctx, RewardSignal signal) {
  return RunSpec{std::move(signal), CriticSpec{cfg.critic, 0.0}, ctx.policy, cfg.steps, cfg.ppo};
}

std::string lambda_arm(double lambda) { return "lambda_" + format_fixed(lambda, 2); }

Verdict make_verdict(std::string name, bool pass, std::string claim, json measured, bool gating = true) {
  Verdict v;
  v.name = std::move(name);
  v.pass = pass;
  v.gating = gating;
  v.claim = std::move(claim);
  v.measured = std::move(measured);
  return v;
}

bool identical_csvs(const ArmResult& a, const ArmResult& b, json& detail) {
  bool all = true;
  detail = json::array();
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    const bool same = to_csv(a.runs[i]) == to_csv(b.runs[i]);
    detail.push_back({{"seed", a.runs[i].seed}, {"identical", same}});
    all = all && same;
  }
  return all;
}

std::vector<std::pair<std::size_t, std::size_t>> full_grid(std::size_t k, std::size_t reps = 1) {
  std::vector<std::pair<std::size_t, std::size_t>> g;
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t x = 0; x < k; ++x) {
      for (std::size_t a = 0; a < k; ++a) g.emplace_back(x, a);
    }
  }
  return g;
}

double argmax_accuracy(const RewardFn& fn, const ToyWorld& world) { return policy_accuracy(rm_matrix(fn, world), world); }

double signal_argmax_accuracy(const RewardSignal& signal, const ToyWorld& world) {
  Rng unused(0);
  return argmax_accuracy([&](std::size_t x, std::size_t a) { return signal(x, a, unused); }, world);
}

void add_policy_matrices(ScenarioReport& report) {
  for (const auto& arm : report.arms) {
    if (arm.runs.empty()) continue;
    const auto& r = arm.runs.front();
    report.matrices.emplace_back("policy_" + arm.spec.name + "_" + seed_name(r.seed), r.final_policy);
  }
}

void add_rm_artifacts(ScenarioReport& report, const std::vector<SeedContext>& contexts) {
  json rows = json::array();
  for (const auto& ctx : contexts) {
    const RewardFn fn = [&](std::size_t x, std::size_t a) { return ctx.rm->reward(x, a); };
    rows.push_back({{"seed", ctx.seed},
                    {"ranking_accuracy", rm_ranking_accuracy(fn, ctx.dataset)},
                    {"argmax_accuracy", argmax_accuracy(fn, ctx.world)}});
    report.checkpoints.emplace_back("rm_" + seed_name(ctx.seed), checkpoint_json(*ctx.rm, derive_seed(ctx.seed, "rm")));
    for (std::size_t i = 0; i < ctx.ensemble.models.size(); ++i) {
      report.checkpoints.emplace_back("rm_" + seed_name(ctx.seed) + "_extra" + std::to_string(i),
                                      checkpoint_json(*ctx.ensemble.models[i], ctx.ensemble.seeds[i]));
    }
  }
  report.tables["reward_models"] = rows;
  const auto& first = contexts.front();
  report.matrices.emplace_back("golden", first.world.golden);
  report.matrices.emplace_back("rm_" + seed_name(first.seed),
                               rm_matrix([&](std::size_t x, std::size_t a) { return first.rm->reward(x, a); }, first.world));
}

void add_brme_artifacts(ScenarioReport& report, const std::vector<SeedContext>& contexts) {
  json rows = json::array();
  for (const auto& ctx : contexts) {
    if (!ctx.brme) continue;
    rows.push_back({{"seed", ctx.seed},
                    {"initial_mean_sigma", ctx.brme_trace.initial_mean_sigma},
                    {"final_mean_sigma", ctx.brme_trace.final_mean_sigma}});
    report.checkpoints.emplace_back("brme_" + seed_name(ctx.seed),
                                    checkpoint_json(*ctx.brme, report.config.stage2.mode, derive_seed(ctx.seed, "brme")));
  }
  if (!rows.empty()) report.tables["brme"] = rows;
}

}  // namespace

// ----------------------------- registry -----------------------------

std::vector<ArmSpec> arm_registry(const ScenarioConfig& cfg) {
  switch (cfg.scenario) {
    case Scenario::standard:
      return {{"standard", true, "stage-1 RM with nominal-only PPO"},
              {"golden", false, "control: PPO on the golden reward"}};
    case Scenario::robust_toy:
      return {{"standard", true, "stage-1 RM with nominal-only PPO"},
              {"robust", true, "blend of nominal and min over the extra RMs at the configured lambda"},
              {"lambda1", false, "control: blend at lambda = 1, must equal the standard arm"}};
    case Scenario::lambda_sweep: {
      std::vector<ArmSpec> arms{{"nominal_only", false, "control: nominal-only PPO"}};
      for (double l : cfg.lambdas) arms.push_back({lambda_arm(l), true, "blend at lambda = " + format_fixed(l, 2)});
      return arms;
    }
    case Scenario::minmax:
      return {{"min", true, "min over the uncertainty set (under-scoring)"},
              {"max", true, "max over the uncertainty set (over-scoring)"},
              {"mean", true, "mean over the uncertainty set"}};
    case Scenario::stochastic:
      return {{"constant_zero", true, "constant zero reward from a warm start"},
              {"min_random", true, "min over n standard-normal sources"},
              {"random", true, "one standard-normal source"}};
    case Scenario::ablation_mean:
      return {{"nominal", false, "extension: nominal source only"},
              {"min", false, "extension: min over the uncertainty set"},
              {"mean", false, "extension: mean over the uncertainty set"}};
    case Scenario::lemma1: return {};
    case Scenario::drift:
      return {{"perturbed", false, "extension: +delta on one logit, constant zero reward"},
              {"unperturbed", false, "control: starts at the reference"}};
  }
  return {};
}

// ----------------------------- scenarios -----------------------------

ScenarioReport run_standard(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  const auto contexts = build_contexts(cfg, kRm, exec);
  report.arms = run_arms(cfg, arm_registry(cfg), contexts,
                         [&](std::size_t arm, const SeedContext& ctx) {
                           RewardSignal sig = arm == 0 ? RewardSignal::single(ctx.nominal)
                                                       : RewardSignal::single(golden_source(ctx.world));
                           return standard_spec(cfg, ctx, std::move(sig));
                         },
                         exec);
  add_rm_artifacts(report, contexts);
  add_policy_matrices(report);

  const auto std_acc = finals(report.arm("standard"));
  const auto gold_acc = finals(report.arm("golden"));
  const double worst = *std::min_element(std_acc.begin(), std_acc.end());
  report.verdicts.push_back(make_verdict("standard_imperfect", worst < 1.0,
                                         "the standard pipeline leaves at least one seed with actor accuracy below 1",
                                         {{"accuracies", std_acc}, {"min", worst}}));
  const bool gold_ok = std::all_of(gold_acc.begin(), gold_acc.end(), [](double a) { return a == 1.0; });
  report.verdicts.push_back(make_verdict("golden_control_optimal", gold_ok,
                                         "PPO on the golden reward reaches accuracy 1 on every seed",
                                         {{"accuracies", gold_acc}}));
  return report;
}

ScenarioReport run_robust_toy(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  const auto contexts = build_contexts(cfg, kRm | kEnsemble, exec);
  const auto strategies = std::vector<IntegrationStrategy>{
      IntegrationStrategy::nominal_only(), IntegrationStrategy::blend(cfg.lambda), IntegrationStrategy::blend(1.0)};
  report.arms = run_arms(cfg, arm_registry(cfg), contexts,
                         [&](std::size_t arm, const SeedContext& ctx) {
                           return standard_spec(cfg, ctx, RewardSignal(ctx.nominal, ctx.set, strategies[arm]));
                         },
                         exec);
  add_rm_artifacts(report, contexts);
  json blend_rows = json::array();
  for (const auto& ctx : contexts) {
    blend_rows.push_back({{"seed", ctx.seed},
                          {"blend_argmax_accuracy",
                           signal_argmax_accuracy(RewardSignal(ctx.nominal, ctx.set, strategies[1]), ctx.world)}});
  }
  report.tables["blend_reward"] = blend_rows;
  {
    const auto& ctx = contexts.front();
    Rng unused(0);
    const RewardSignal blended(ctx.nominal, ctx.set, strategies[1]);
    report.matrices.emplace_back("blend_" + seed_name(ctx.seed),
                                 rm_matrix([&](std::size_t x, std::size_t a) { return blended(x, a, unused); }, ctx.world));
    Rng probe_rng(derive_seed(ctx.seed, "ranges"));
    const auto grid = full_grid(cfg.k);
    report.ranges.emplace_back("robust", range_stats(*ctx.set, strategies[1], grid, probe_rng, &ctx.nominal));
  }
  add_policy_matrices(report);

  const auto robust = finals(report.arm("robust"));
  const auto lam1 = finals(report.arm("lambda1"));
  const double med = median(robust);
  report.verdicts.push_back(make_verdict("robust_median_optimal", med == 1.0,
                                         "the robust arm reaches accuracy 1 on the median seed",
                                         {{"accuracies", robust}, {"median", med}}));
  report.verdicts.push_back(make_verdict("robust_mean_ge_lambda1", mean_of(robust) >= mean_of(lam1),
                                         "robust mean final accuracy is at least the lambda = 1 arm's",
                                         {{"robust_mean", mean_of(robust)}, {"lambda1_mean", mean_of(lam1)}}));
  const Comparison cmp = compare_arms(report, "robust", "lambda1", "final_accuracy");
  const std::size_t not_worse = cmp.a_greater + cmp.ties;
  report.verdicts.push_back(make_verdict("robust_ge_lambda1_majority", not_worse >= cfg.majority(),
                                         "robust accuracy is at least the lambda = 1 arm's on a majority of seeds",
                                         {{"seeds_not_worse", not_worse}, {"needed", cfg.majority()}, {"comparison", to_json(cmp)}}));
  json detail;
  const bool same = identical_csvs(report.arm("lambda1"), report.arm("standard"), detail);
  report.verdicts.push_back(make_verdict("blend_identity", same,
                                         "lambda = 1 runs are byte-identical to nominal-only runs", detail));
  return report;
}

ScenarioReport run_lambda_sweep(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  const auto contexts = build_contexts(cfg, kRm | kEnsemble, exec);
  const auto specs = arm_registry(cfg);
  report.arms = run_arms(cfg, specs, contexts,
                         [&](std::size_t arm, const SeedContext& ctx) {
                           const IntegrationStrategy st = arm == 0 ? IntegrationStrategy::nominal_only()
                                                                   : IntegrationStrategy::blend(cfg.lambdas[arm - 1]);
                           return standard_spec(cfg, ctx, RewardSignal(ctx.nominal, ctx.set, st));
                         },
                         exec);
  add_rm_artifacts(report, contexts);
  add_policy_matrices(report);

  json rows = json::array();
  const auto summaries = summarize_arms(report);
  for (std::size_t i = 1; i < summaries.size(); ++i) {
    rows.push_back({{"lambda", cfg.lambdas[i - 1]},
                    {"short_mean_accuracy", summaries[i].mean_short},
                    {"long_mean_accuracy", summaries[i].mean_final},
                    {"long_std_accuracy", summaries[i].std_final}});
  }
  report.tables["lambda"] = rows;

  auto has = [&](double l) {
    return std::any_of(cfg.lambdas.begin(), cfg.lambdas.end(),
                       [&](double v) { return format_fixed(v, 2) == format_fixed(l, 2); });
  };
  if (has(1.0)) {
    json detail;
    const bool same = identical_csvs(report.arm(lambda_arm(1.0)), report.arm("nominal_only"), detail);
    report.verdicts.push_back(make_verdict("blend_identity", same,
                                           "lambda = 1 runs are byte-identical to nominal-only runs", detail));
    std::vector<std::string> robust;
    for (double l : {0.4, 0.6}) {
      if (has(l)) robust.push_back(lambda_arm(l));
    }
    if (!robust.empty()) {
      const auto base = finals(report.arm(lambda_arm(1.0)));
      std::size_t wins = 0;
      json per_seed = json::array();
      for (std::size_t s = 0; s < base.size(); ++s) {
        double m = 0.0;
        for (const auto& name : robust) m += report.arm(name).runs[s].final_accuracy();
        m /= static_cast<double>(robust.size());
        wins += m >= base[s] ? 1 : 0;
        per_seed.push_back({{"seed", cfg.seeds[s]}, {"robust_mean", m}, {"lambda1", base[s]}});
      }
      report.verdicts.push_back(make_verdict(
          "mid_lambda_ge_lambda1_long", wins >= cfg.majority(),
          "long-horizon accuracy at lambda in {0.4, 0.6} is at least the lambda = 1 arm's on a majority of seeds",
          {{"seeds_not_worse", wins}, {"needed", cfg.majority()}, {"per_seed", per_seed}}));
    }
  }
  return report;
}

ScenarioReport run_minmax(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  const auto contexts = build_contexts(cfg, set_needs(cfg), exec);
  const std::vector<IntegrationStrategy> strategies{IntegrationStrategy::min(), IntegrationStrategy::max(),
                                                    IntegrationStrategy::mean()};
  report.arms = run_arms(cfg, arm_registry(cfg), contexts,
                         [&](std::size_t arm, const SeedContext& ctx) {
                           return standard_spec(cfg, ctx, RewardSignal(ctx.nominal, ctx.set, strategies[arm]));
                         },
                         exec);
  add_rm_artifacts(report, contexts);
  add_brme_artifacts(report, contexts);
  add_policy_matrices(report);
  {
    const auto& ctx = contexts.front();
    const auto grid = full_grid(cfg.k);
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      Rng probe_rng(derive_seed(ctx.seed, "ranges"));
      report.ranges.emplace_back(report.arms[i].spec.name,
                                 range_stats(*ctx.set, strategies[i], grid, probe_rng, &ctx.nominal));
    }
  }

  json rows = json::array();
  std::size_t stable = 0, between = 0;
  for (std::size_t s = 0; s < contexts.size(); ++s) {
    const RunRecord& mn = report.arm("min").runs[s];
    const RunRecord& mx = report.arm("max").runs[s];
    const RunRecord& me = report.arm("mean").runs[s];
    const double a = mn.final_accuracy(), b = mx.final_accuracy(), c = me.final_accuracy();
    const bool st = late_accuracy_std(mn) <= late_accuracy_std(mx);
    const bool bt = std::min(a, b) <= c && c <= std::max(a, b);
    stable += st;
    between += bt;
    rows.push_back({{"seed", contexts[s].seed},
                    {"min_final", a},
                    {"max_final", b},
                    {"mean_final", c},
                    {"min_late_std", late_accuracy_std(mn)},
                    {"max_late_std", late_accuracy_std(mx)},
                    {"mean_late_std", late_accuracy_std(me)}});
  }
  report.tables["minmax"] = rows;
  report.verdicts.push_back(make_verdict("min_more_stable_than_max", stable >= cfg.majority(),
                                         "late-training accuracy std of the min arm is at most the max arm's on a majority of seeds",
                                         {{"seeds", stable}, {"needed", cfg.majority()}}));
  report.verdicts.push_back(make_verdict("mean_between_min_and_max", between >= cfg.majority(),
                                         "mean-arm final accuracy lies between the min and max arms' on a majority of seeds",
                                         {{"seeds", between}, {"needed", cfg.majority()}}));
  return report;
}

ScenarioReport run_stochastic(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  auto contexts = build_contexts(cfg, 0, exec);

  // Warm start: a soft golden-reward policy, so that noise can still move it.
  std::vector<RunRecord> warm(contexts.size());
  for_each_index(
      contexts.size(),
      [&](std::size_t i) {
        SeedContext& ctx = contexts[i];
        PpoConfig wcfg = cfg.ppo;
        wcfg.beta = cfg.warmup.beta;
        const double baseline =
            std::accumulate(ctx.world.golden.data().begin(), ctx.world.golden.data().end(), 0.0) /
            static_cast<double>(cfg.k * cfg.k);
        Rng rng(derive_seed(ctx.seed, "warmup"));
        TrainResult r = train(ctx.policy, RewardSignal::single(golden_source(ctx.world)), ctx.world, wcfg,
                              cfg.warmup.steps, rng, {CriticMode::exact, baseline});
        warm[i] = r.record;
        ctx.policy = std::move(r.policy);
      },
      exec);

  const auto single = std::make_shared<const UncertaintySet>(make_synthetic_set(SyntheticKind::gaussian_random, 1));
  const auto multi =
      std::make_shared<const UncertaintySet>(make_synthetic_set(SyntheticKind::gaussian_random, cfg.n_sources));
  const double min_mean = expected_min_standard_normal(cfg.n_sources);
  const RewardSource zero = constant_source(0.0);
  const std::vector<RewardSignal> signals{RewardSignal::single(zero),
                                          RewardSignal(zero, multi, IntegrationStrategy::min()),
                                          RewardSignal(zero, single, IntegrationStrategy::min())};
  const std::vector<double> exact_values{0.0, min_mean, 0.0};
  report.arms = run_arms(cfg, arm_registry(cfg), contexts,
                         [&](std::size_t arm, const SeedContext& ctx) {
                           return RunSpec{signals[arm], CriticSpec{cfg.critic, exact_values[arm]}, ctx.policy,
                                          cfg.steps, cfg.ppo};
                         },
                         exec);
  add_policy_matrices(report);
  report.matrices.insert(report.matrices.begin(), {"golden", contexts.front().world.golden});

  json rows = json::array();
  std::size_t ordered = 0;
  double worst_const = 0.0;
  for (std::size_t s = 0; s < contexts.size(); ++s) {
    const double dc = degradation(report.arm("constant_zero").runs[s]);
    const double dm = degradation(report.arm("min_random").runs[s]);
    const double dr = degradation(report.arm("random").runs[s]);
    ordered += (dc <= dm && dm <= dr) ? 1 : 0;
    worst_const = std::max(worst_const, dc);
    rows.push_back({{"seed", contexts[s].seed},
                    {"warm_accuracy", warm[s].final_accuracy()},
                    {"degradation_constant_zero", dc},
                    {"degradation_min_random", dm},
                    {"degradation_random", dr}});
  }
  report.tables["degradation"] = rows;
  report.verdicts.push_back(make_verdict("degradation_ordering", ordered >= cfg.majority(),
                                         "degradation: constant zero <= min of random <= single random, on a majority of seeds",
                                         {{"seeds", ordered}, {"needed", cfg.majority()}}));
  report.verdicts.push_back(make_verdict("constant_no_degradation", worst_const < tol::kConstantDegradation,
                                         "constant zero reward with an exact critic does not degrade accuracy",
                                         {{"max_degradation", worst_const}, {"critic", cfg.critic == CriticMode::exact ? "exact" : "learned"}},
                                         cfg.critic == CriticMode::exact));

  // Observed reward spread on the full grid, repeated to average out noise.
  const auto grid = full_grid(cfg.k, 64);
  Rng r1(derive_seed(cfg.seeds.front(), "ranges/random"));
  Rng r2(derive_seed(cfg.seeds.front(), "ranges/min_random"));
  const RewardRangeStats rs_single = range_stats(*single, IntegrationStrategy::min(), grid, r1, &zero);
  const RewardRangeStats rs_multi = range_stats(*multi, IntegrationStrategy::min(), grid, r2, &zero);
  report.ranges.emplace_back("random", rs_single);
  report.ranges.emplace_back("min_random", rs_multi);
  report.verdicts.push_back(make_verdict("min_random_narrower", rs_multi.integrated.std < rs_single.integrated.std,
                                         "the min over random sources has a smaller observed reward std than one source",
                                         {{"min_random_std", rs_multi.integrated.std},
                                          {"random_std", rs_single.integrated.std},
                                          {"min_random_mean", rs_multi.integrated.mean},
                                          {"quadrature_mean", min_mean}}));
  report.tables["order_statistics"] = json::array(
      {{{"n", cfg.n_sources}, {"observed_mean", rs_multi.integrated.mean}, {"observed_std", rs_multi.integrated.std},
        {"quadrature_mean", min_mean}}});
  return report;
}

ScenarioReport run_ablation_mean(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  const auto contexts = build_contexts(cfg, set_needs(cfg), exec);
  const std::vector<IntegrationStrategy> strategies{IntegrationStrategy::nominal_only(), IntegrationStrategy::min(),
                                                    IntegrationStrategy::mean()};
  report.arms = run_arms(cfg, arm_registry(cfg), contexts,
                         [&](std::size_t arm, const SeedContext& ctx) {
                           return standard_spec(cfg, ctx, RewardSignal(ctx.nominal, ctx.set, strategies[arm]));
                         },
                         exec);
  add_rm_artifacts(report, contexts);
  add_brme_artifacts(report, contexts);
  add_policy_matrices(report);

  if (cfg.uncertainty_set == SetChoice::brme) {
    bool all_down = true;
    json per_seed = json::array();
    for (const auto& ctx : contexts) {
      bool down = true;
      for (std::size_t h = 0; h < ctx.brme_trace.final_mean_sigma.size(); ++h) {
        down = down && ctx.brme_trace.final_mean_sigma[h] < ctx.brme_trace.initial_mean_sigma[h];
      }
      all_down = all_down && down;
      per_seed.push_back({{"seed", ctx.seed}, {"all_heads_decreased", down}});
    }
    report.verdicts.push_back(make_verdict("brme_sigma_decreased", all_down,
                                           "every BRME head's mean sigma decreases during training", per_seed));
  }
  const Comparison mean_vs_min = compare_arms(report, "mean", "min", "final_accuracy");
  const Comparison mean_vs_nominal = compare_arms(report, "mean", "nominal", "final_accuracy");
  report.verdicts.push_back(make_verdict("mean_vs_min", true, "logged comparison", to_json(mean_vs_min), false));
  report.verdicts.push_back(make_verdict("mean_vs_nominal", true, "logged comparison", to_json(mean_vs_nominal), false));
  return report;
}

ScenarioReport run_lemma1(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  const std::uint64_t base = cfg.seeds.front();
  const std::size_t n = cfg.lemma1.probes;

  struct Probe {
    std::uint64_t seed = 0;
    double c = 0.0;
    double gamma = 0.0;
    Lemma1Result result;
    double control_grad_norm = 0.0;
  };
  std::vector<Probe> probes(n);
  for_each_index(
      n,
      [&](std::size_t i) {
        Probe& p = probes[i];
        Rng pr(derive_seed(base, static_cast<std::uint64_t>(i)));
        p.c = cfg.lemma1.c_min + (cfg.lemma1.c_max - cfg.lemma1.c_min) * pr.uniform();
        p.gamma = cfg.lemma1.gamma_max * pr.uniform();
        p.seed = pr.next_u64();
        Rng policy_rng(p.seed);
        const PolicyModel policy = PolicyModel::random(cfg.k, cfg.ppo, policy_rng);
        Rng run_rng(derive_seed(p.seed, "collect"));
        p.result = lemma1_check(policy, p.c, p.gamma, cfg.ppo, run_rng);

        // KL control: a perturbed policy with beta > 0 gets a learning signal.
        PpoConfig ccfg = cfg.ppo;
        ccfg.beta = cfg.lemma1.control_beta;
        const ReferencePolicy ref(policy);
        const PolicyModel moved = perturb_logit(policy, 0, 1.0);
        const ToyWorld world = make_world(cfg.k);
        Rng control_rng(derive_seed(p.seed, "control"));
        const auto batch = collect(moved, ref, RewardSignal::single(constant_source(p.c)), world, ccfg, control_rng);
        const auto adv = advantages(batch, CriticModel::exact(p.c));
        p.control_grad_norm = l2_norm(clipped_surrogate(moved, batch, adv, ccfg.clip_eps).grad);
      },
      exec);

  double max_adv = 0.0, max_grad = 0.0, max_q_err = 0.0;
  bool unchanged = true;
  json rows = json::array();
  std::ostringstream csv;
  csv << "probe,seed,c,gamma,q_value,advantage_max_abs,grad_norm,params_unchanged,control_grad_norm\n";
  for (std::size_t i = 0; i < n; ++i) {
    const Probe& p = probes[i];
    const double q_expected = p.c / (1.0 - p.gamma);
    max_adv = std::max(max_adv, p.result.advantage_max_abs);
    max_grad = std::max(max_grad, p.result.grad_norm);
    max_q_err = std::max(max_q_err, std::abs(p.result.q_value - q_expected));
    unchanged = unchanged && p.result.params_unchanged;
    rows.push_back({{"probe", i},
                    {"seed", p.seed},
                    {"c", p.c},
                    {"gamma", p.gamma},
                    {"q_value", p.result.q_value},
                    {"advantage_max_abs", p.result.advantage_max_abs},
                    {"grad_norm", p.result.grad_norm},
                    {"control_grad_norm", p.control_grad_norm}});
    csv << i << ',' << p.seed << ',' << format_double(p.c) << ',' << format_double(p.gamma) << ','
        << format_double(p.result.q_value) << ',' << format_double(p.result.advantage_max_abs) << ','
        << format_double(p.result.grad_norm) << ',' << (p.result.params_unchanged ? 1 : 0) << ','
        << format_double(p.control_grad_norm) << '\n';
  }
  report.tables["lemma1"] = rows;
  report.extra_csv.emplace_back("lemma1/probes.csv", csv.str());

  const double q_example = constant_reward_value(1.0, 0.9);
  report.verdicts.push_back(make_verdict("advantages_exactly_zero", max_adv == 0.0,
                                         "constant reward with an exact critic gives zero advantage",
                                         {{"max_abs_advantage", max_adv}, {"probes", n}}));
  report.verdicts.push_back(make_verdict("grad_norm_below_bound", max_grad < tol::kZeroGradNorm,
                                         "the actor gradient vanishes", {{"max_grad_norm", max_grad}, {"bound", tol::kZeroGradNorm}}));
  report.verdicts.push_back(make_verdict("actor_unchanged", unchanged, "the update leaves the actor's parameters unchanged",
                                         {{"all_unchanged", unchanged}}));
  report.verdicts.push_back(make_verdict(
      "q_value_formula", max_q_err <= tol::kQValue && std::abs(q_example - 10.0) <= tol::kQValue,
      "Q = c / (1 - gamma)", {{"max_error", max_q_err}, {"q_c1_gamma0.9", q_example}}));
  double min_control = std::numeric_limits<double>::infinity();
  for (const auto& p : probes) min_control = std::min(min_control, p.control_grad_norm);
  report.verdicts.push_back(make_verdict("kl_control", true, "logged: beta > 0 with a perturbed policy reintroduces a gradient",
                                         {{"min_control_grad_norm", min_control}, {"beta", cfg.lemma1.control_beta}},
                                         false));
  return report;
}

ScenarioReport run_drift(const ScenarioConfig& cfg, Exec exec) {
  ScenarioReport report;
  report.config = cfg;
  const auto contexts = build_contexts(cfg, 0, exec);
  const auto specs = arm_registry(cfg);
  PpoConfig dcfg = cfg.ppo;
  dcfg.beta = cfg.drift.beta;
  report.arms.resize(specs.size());
  for (std::size_t a = 0; a < specs.size(); ++a) {
    report.arms[a].spec = specs[a];
    report.arms[a].runs.resize(contexts.size());
  }
  const std::size_t n_seeds = contexts.size();
  for_each_index(
      specs.size() * n_seeds,
      [&](std::size_t job) {
        const std::size_t a = job / n_seeds, s = job % n_seeds;
        const SeedContext& ctx = contexts[s];
        const ReferencePolicy ref(ctx.policy);
        const PolicyModel start =
            a == 0 ? perturb_logit(ctx.policy, cfg.drift.response, cfg.drift.perturbation) : ctx.policy;
        Rng rng(derive_seed(ctx.seed, "ppo"));
        TrainResult r = train(start, RewardSignal::single(constant_source(0.0)), ctx.world, dcfg, cfg.drift.steps, rng,
                              {CriticMode::learned, 0.0}, &ref);
        r.record.label = specs[a].name;
        r.record.seed = ctx.seed;
        report.arms[a].runs[s] = std::move(r.record);
      },
      exec);
  add_policy_matrices(report);

  json rows = json::array();
  bool pulled = true;
  double still_max = 0.0;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const RunRecord& p = report.arms[0].runs[s];
    const RunRecord& u = report.arms[1].runs[s];
    pulled = pulled && p.steps.back().kl < p.initial_kl;
    still_max = std::max(still_max, u.initial_kl);
    for (const auto& m : u.steps) still_max = std::max(still_max, m.kl);
    rows.push_back({{"seed", contexts[s].seed}, {"initial_kl", p.initial_kl}, {"final_kl", p.steps.back().kl}});
  }
  report.tables["drift"] = rows;
  report.verdicts.push_back(make_verdict("kl_pulled_back", pulled,
                                         "under a constant reward the KL penalty pulls a perturbed policy back toward the reference",
                                         {{"per_seed", rows}}));
  report.verdicts.push_back(make_verdict("unperturbed_stays_put", still_max < tol::kDriftZero,
                                         "a policy starting at the reference stays there",
                                         {{"max_kl", still_max}, {"bound", tol::kDriftZero}}));
  return report;
}

ScenarioReport run_scenario(const ScenarioConfig& cfg, Exec exec) {
  switch (cfg.scenario) {
    case Scenario::standard: return run_standard(cfg, exec);
    case Scenario::robust_toy: return run_robust_toy(cfg, exec);
    case Scenario::lambda_sweep: return run_lambda_sweep(cfg, exec);
    case Scenario::minmax: return run_minmax(cfg, exec);
    case Scenario::stochastic: return run_stochastic(cfg, exec);
    case Scenario::ablation_mean: return run_ablation_mean(cfg, exec);
    case Scenario::lemma1: return run_lemma1(cfg, exec);
    case Scenario::drift: return run_drift(cfg, exec);
  }
  throw std::logic_error("run_scenario: unhandled scenario");
}

}  // namespace rrlab
