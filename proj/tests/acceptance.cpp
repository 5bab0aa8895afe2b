// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rrlab/cli.hpp"
#include "rrlab/io.hpp"
#include "rrlab/labs.hpp"
#include "rrlab/tolerances.hpp"
#include "support.hpp"

using namespace rrlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

std::vector<double> finals(const ArmResult& arm) {
  std::vector<double> out;
  for (const auto& r : arm.runs) out.push_back(r.final_accuracy());
  return out;
}

bool identical_runs(const ArmResult& a, const ArmResult& b) {
  if (a.runs.size() != b.runs.size()) return false;
  for (std::size_t i = 0; i < a.runs.size(); ++i)
    if (to_csv(a.runs[i]) != to_csv(b.runs[i])) return false;
  return true;
}

// Reports are shared between criteria that read the same scenario.
std::unique_ptr<ScenarioReport> g_robust;
double g_robust_seconds = 0.0;

const ScenarioReport& robust_report() {
  if (!g_robust) {
    const auto t0 = Clock::now();
    g_robust = std::make_unique<ScenarioReport>(run_robust_toy(load_scenario_config(Scenario::robust_toy)));
    g_robust_seconds = seconds_since(t0);
  }
  return *g_robust;
}

Outcome lemma_suite() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(2024, "acceptance/lemma"));
  double worst_adv = 0.0, worst_grad = 0.0, worst_q = 0.0;
  bool unchanged = true;
  for (int probe = 0; probe < 50; ++probe) {
    const double c = -5.0 + 10.0 * rng.uniform();
    const double gamma = 0.99 * rng.uniform();
    PpoConfig cfg;
    cfg.policy_hidden_layers = probe % 2 ? 0 : 2;
    Rng policy_rng(derive_seed(probe, "policy"));
    const auto policy = PolicyModel::random(8, cfg, policy_rng);
    const auto r = lemma1_check(policy, c, gamma, cfg, rng);
    worst_adv = std::max(worst_adv, r.advantage_max_abs);
    worst_grad = std::max(worst_grad, r.grad_norm);
    worst_q = std::max(worst_q, std::abs(r.q_value - c / (1.0 - gamma)));
    unchanged = unchanged && r.params_unchanged;
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_adv == 0.0 && worst_grad < tol::kZeroGradNorm && worst_q <= tol::kQValue && unchanged &&
                    secs < 10.0;
  return {pass, "max|A|=" + num(worst_adv) + " max grad=" + num(worst_grad) + " max |Q-c/(1-g)|=" + num(worst_q) +
                    " time=" + num(secs) + "s"};
}

Outcome standard_pipeline() {
  const auto t0 = Clock::now();
  const auto rep = run_standard(load_scenario_config(Scenario::standard));
  const double secs = seconds_since(t0);
  const auto std_acc = finals(rep.arm("standard"));
  const auto gold = finals(rep.arm("golden"));
  const bool imperfect = std::any_of(std_acc.begin(), std_acc.end(), [](double a) { return a < 1.0; });
  const bool golden_ok = std::all_of(gold.begin(), gold.end(), [](double a) { return a == 1.0; });
  return {imperfect && golden_ok && std_acc.size() == 10 && secs < 300.0,
          "standard mean=" + num(mean_of(std_acc)) + " min=" + num(*std::min_element(std_acc.begin(), std_acc.end())) +
              " golden min=" + num(*std::min_element(gold.begin(), gold.end())) + " time=" + num(secs) + "s"};
}

Outcome robust_arm() {
  const auto& rep = robust_report();
  const auto robust = finals(rep.arm("robust"));
  const auto lam1 = finals(rep.arm("lambda1"));
  const double med = median(robust);
  const bool setup = rep.config.lambda == 0.4 && rep.config.n_sources == 3 &&
                     rep.config.uncertainty_set == SetChoice::seed_ensemble;
  return {setup && med == 1.0 && mean_of(robust) >= mean_of(lam1) && g_robust_seconds < 600.0,
          "robust median=" + num(med) + " mean=" + num(mean_of(robust)) + " lambda1 mean=" + num(mean_of(lam1)) +
              " time=" + num(g_robust_seconds) + "s"};
}

Outcome blend_identity() {
  const auto& rep = robust_report();
  const bool toy = identical_runs(rep.arm("lambda1"), rep.arm("standard"));

  // Stochastic members: the blend must consume the Rng exactly like nominal-only.
  const auto world = make_world(8);
  const PpoConfig cfg = load_scenario_config(Scenario::standard).ppo;
  auto set = std::make_shared<const UncertaintySet>(make_synthetic_set(SyntheticKind::gaussian_random, 3));
  const RewardSource nominal = golden_source(world);
  bool stochastic = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto go = [&](IntegrationStrategy st) {
      Rng rng(seed);
      const auto policy = PolicyModel::random(8, cfg, rng);
      return to_csv(train(policy, RewardSignal(nominal, set, st), world, cfg, 60, rng).record);
    };
    stochastic = stochastic && go(IntegrationStrategy::blend(1.0)) == go(IntegrationStrategy::nominal_only());
  }
  return {toy && stochastic, std::string("toy seeds ") + (toy ? "byte-equal" : "differ") + ", stochastic sources " +
                                 (stochastic ? "byte-equal" : "differ")};
}

Outcome sigma_gradient() {
  Rng rng(derive_seed(2024, "acceptance/sigma"));
  double worst_rel = 0.0, worst_z = std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (auto mode : {MseLossMode::separated, MseLossMode::literal}) {
    for (int probe = 0; probe < 20; ++probe) {
      const GaussianReward g{3.0 * rng.normal(), 0.05 + 1.95 * rng.uniform(), 0};
      const double p_hat = 0.02 + 0.96 * rng.uniform();
      const double alpha = 0.5 + 3.5 * rng.uniform();
      const auto side = probe % 2 ? PairSide::rejected : PairSide::chosen;
      const auto est = sigma_grad_expectation(g, side, p_hat, alpha, mode, 1000000, derive_seed(probe, to_string(mode)));
      worst_rel = std::max(worst_rel, std::abs(est.mean - 2.0 * g.sigma) / (2.0 * g.sigma));
      worst_z = std::min(worst_z, est.mean / est.std_error);
      ++n;
    }
  }
  return {worst_rel <= tol::kSigmaGradRel && worst_z >= -tol::kStandardErrors,
          num(n) + " probes, worst rel err=" + num(worst_rel) + ", min mean/SE=" + num(worst_z)};
}

Outcome brme_sigma() {
  const auto cfg = load_scenario_config(Scenario::ablation_mean);
  std::size_t heads = 0, decreased = 0;
  for (auto seed : cfg.seeds) {
    const auto world = make_world(cfg.k, cfg.golden);
    Rng data_rng(derive_seed(seed, "data"));
    const auto data = annotate(world, data_rng);
    Rng rm_rng(derive_seed(seed, "rm"));
    const auto rm = train_stage1(world, data, cfg.stage1, rm_rng);
    Rng rng(derive_seed(seed, "brme"));
    auto brme = BrmeModel::initial(rm, cfg.brme, rng);
    const auto assignment = partition_dataset(data.size(), cfg.brme.n_heads, rng);
    Stage2Trace trace;
    train_stage2(brme, rm, data, assignment, cfg.stage2, rng, &trace);
    for (std::size_t h = 0; h < trace.initial_mean_sigma.size(); ++h) {
      ++heads;
      decreased += trace.final_mean_sigma[h] < trace.initial_mean_sigma[h];
    }
  }
  return {heads > 0 && decreased == heads, num(decreased) + "/" + num(heads) + " heads decreased"};
}

Outcome order_statistics() {
  auto min_of = [](int n) {
    return [n](Rng& rng) {
      double m = rng.normal();
      for (int i = 1; i < n; ++i) m = std::min(m, rng.normal());
      return m;
    };
  };
  const Moments five = monte_carlo_moments(1000000, derive_seed(2024, "acceptance/min5"), min_of(5));
  const Moments two = monte_carlo_moments(1000000, derive_seed(2024, "acceptance/min2"), min_of(2));
  const double sd5 = std::sqrt(five.variance());
  const double var2_target = 1.0 - 1.0 / std::numbers::pi;
  const bool pass = sd5 < 1.0 && std::abs(five.mean() + 1.163) <= tol::kOrderStatMean &&
                    std::abs(two.variance() - var2_target) <= tol::kOrderStatVar;
  return {pass, "min5 mean=" + num(five.mean()) + " std=" + num(sd5) + "; min2 var=" + num(two.variance()) +
                    " (target " + num(var2_target) + ")"};
}

Outcome stochastic_scenario() {
  const auto cfg = load_scenario_config(Scenario::stochastic);
  const auto rep = run_stochastic(cfg);
  std::size_t ordered = 0;
  double worst_const = 0.0;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    const double dc = degradation(rep.arm("constant_zero").runs[s]);
    const double dm = degradation(rep.arm("min_random").runs[s]);
    const double dr = degradation(rep.arm("random").runs[s]);
    ordered += dc <= dm && dm <= dr;
    worst_const = std::max(worst_const, dc);
  }
  const bool exact = cfg.critic == CriticMode::exact;
  return {exact && ordered >= 6 && worst_const < tol::kConstantDegradation,
          "ordering on " + num(ordered) + "/10 seeds, worst constant-arm degradation=" + num(worst_const)};
}

Outcome minmax_scenario() {
  const auto cfg = load_scenario_config(Scenario::minmax);
  const auto rep = run_minmax(cfg);
  std::size_t stable = 0, between = 0;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    const auto& mn = rep.arm("min").runs[s];
    const auto& mx = rep.arm("max").runs[s];
    const auto& me = rep.arm("mean").runs[s];
    stable += late_accuracy_std(mn) <= late_accuracy_std(mx);
    const double a = mn.final_accuracy(), b = mx.final_accuracy(), c = me.final_accuracy();
    between += std::min(a, b) <= c && c <= std::max(a, b);
  }
  return {stable >= 6 && between >= 6,
          "min late std <= max on " + num(stable) + "/10, mean between on " + num(between) + "/10"};
}

Outcome normalization() {
  Rng rng(derive_seed(2024, "acceptance/normalize"));
  double worst_mean = 0.0, worst_std = 0.0;
  for (int t = 0; t < 20; ++t) {
    const double loc = 10.0 * rng.normal(), scale = 0.1 + 10.0 * rng.uniform();
    const RewardSource src = [loc, scale](std::size_t, std::size_t, Rng& r) { return loc + scale * r.normal(); };
    const std::vector<std::pair<std::size_t, std::size_t>> probes(1000, {0, 0});
    const std::uint64_t seed = rng.next_u64();
    Rng cal(seed), replay(seed);
    const auto stats = calibrate_source(src, probes, cal);
    const auto normed = normalized_source(src, stats);
    std::vector<double> z;
    for (const auto& [x, a] : probes) z.push_back(normed(x, a, replay));
    const auto e = summarize("z", z);
    worst_mean = std::max(worst_mean, std::abs(e.mean));
    worst_std = std::max(worst_std, std::abs(e.std - 1.0));
  }

  // Fixture with the first row's stats exactly: standardized draws rescaled.
  std::vector<double> base(500);
  for (auto& v : base) v = rng.normal();
  const auto b = summarize("base", base);
  auto values = std::make_shared<std::vector<double>>();
  for (double v : base) values->push_back(-0.032 + 4.529 * (v - b.mean) / b.std);
  auto cursor = std::make_shared<std::size_t>(0);
  const RewardSource fixture = [values, cursor](std::size_t, std::size_t, Rng&) {
    return (*values)[(*cursor)++ % values->size()];
  };
  const std::vector<std::pair<std::size_t, std::size_t>> probes(values->size(), {0, 0});
  const auto stats = calibrate_source(fixture, probes, rng, "table7_row1");
  double worst_trip = 0.0;
  for (double raw : *values) {
    const double back = normalize_reward(raw, stats) * stats.std + stats.mean;
    worst_trip = std::max(worst_trip, std::abs(back - raw));
  }
  const bool fixture_ok = std::abs(stats.mean + 0.032) < 1e-12 && std::abs(stats.std - 4.529) < 1e-12 &&
                          std::abs(normalize_reward(4.497, stats) - 1.0) < 1e-12 && worst_trip < 1e-12;
  return {worst_mean <= tol::kNormalization && worst_std <= tol::kNormalization && fixture_ok,
          "max |mean|=" + num(worst_mean) + " max |std-1|=" + num(worst_std) + "; fixture mean=" + num(stats.mean) +
              " std=" + num(stats.std) + " round-trip err=" + num(worst_trip)};
}

Outcome finite_differences() {
  Rng rng(derive_seed(2024, "acceptance/fd"));
  const auto world = make_world(8);

  double mle = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    Rng data_rng(derive_seed(probe, "data"));
    const auto data = annotate(world, data_rng);
    const auto rm = ScalarRewardModel::random(8, RewardNetConfig{.hidden_width = 16}, rng);
    const auto r = mle_loss(rm, data.examples);
    const auto fd = testing::finite_difference(
        {rm.net().params().begin(), rm.net().params().end()},
        [&](std::span<const double> p) {
          ScalarRewardModel m = rm;
          m.net().set_params(p);
          return mle_loss(m, data.examples).loss;
        },
        r.grad);
    mle = std::max(mle, fd.worst_rel);
  }

  double mse = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const auto mode = probe % 2 ? MseLossMode::literal : MseLossMode::separated;
    const double p_hat = 0.01 + 0.98 * rng.uniform(), alpha = 0.5 + 3.0 * rng.uniform();
    const double ep = rng.normal(), en = rng.normal();
    const std::vector<double> x{rng.normal(), 0.05 + 2.0 * rng.uniform(), rng.normal(), 0.05 + 2.0 * rng.uniform()};
    auto eval = [&](std::span<const double> v) {
      return mse_head_loss({v[0], v[1], 0}, {v[2], v[3], 0}, p_hat, alpha, ep, en, mode);
    };
    const auto r = eval(x);
    const std::vector<double> grad{r.d_mu_plus, r.d_sigma_plus, r.d_mu_minus, r.d_sigma_minus};
    mse = std::max(mse, testing::finite_difference(x, [&](std::span<const double> v) { return eval(v).loss; }, grad)
                            .worst_rel);
  }

  // Surrogate: one run of probes with every ratio inside the clip range, one
  // with every ratio on the clipped side.
  double unclipped = 0.0, clipped = 0.0;
  const double eps = 0.2;
  for (bool clip : {false, true}) {
    for (int probe = 0; probe < 100; ++probe) {
      PpoConfig cfg;
      cfg.policy_hidden_layers = probe % 2 ? 0 : 2;
      cfg.activation = Activation::tanh;
      cfg.policy_init_scale = 1.0;
      const auto policy = PolicyModel::random(8, cfg, rng);
      std::vector<Experience> batch;
      std::vector<double> adv;
      for (int i = 0; i < 8; ++i) {
        Experience e;
        e.prompt = rng.below(8);
        e.action = rng.below(8);
        const double a = rng.normal();
        const double ratio = !clip  ? 1.0 - eps + 0.02 + (2.0 * eps - 0.04) * rng.uniform()
                             : a > 0 ? 1.0 + eps + 0.05 + rng.uniform()
                                     : 1.0 - eps - 0.05 - 0.5 * rng.uniform();
        e.behavior_logprob = policy.log_probs(e.prompt)[e.action] - std::log(ratio);
        batch.push_back(e);
        adv.push_back(a);
      }
      const auto s = clipped_surrogate(policy, batch, adv, eps);
      const auto fd = testing::finite_difference(
          {policy.net().params().begin(), policy.net().params().end()},
          [&](std::span<const double> p) {
            PolicyModel q = policy;
            q.net().set_params(p);
            return clipped_surrogate(q, batch, adv, eps).value;
          },
          s.grad);
      (clip ? clipped : unclipped) = std::max(clip ? clipped : unclipped, fd.worst_rel);
    }
  }
  const bool pass = mle < tol::kFiniteDiffRel && mse < tol::kFiniteDiffRel && unclipped < tol::kFiniteDiffRel &&
                    clipped < tol::kFiniteDiffRel;
  return {pass, "worst rel err: mle=" + num(mle) + " mse=" + num(mse) + " surrogate unclipped=" + num(unclipped) +
                    " clipped=" + num(clipped)};
}

std::vector<std::pair<std::string, std::string>> metric_files(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir / "metrics")) {
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out.emplace_back(fs::relative(e.path(), dir).string(), read_file(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  testing::TempDir tmp("acceptance_determinism");
  std::ostringstream sink;
  std::size_t files = 0;
  bool same = true;
  for (const std::string scenario : {"standard", "stochastic"}) {
    const auto a = tmp.path() / (scenario + "_a");
    const auto b = tmp.path() / (scenario + "_b");
    for (const auto& dir : {a, b}) {
      const int code = cli_main({"rrlab", "run", "--scenario", scenario, "--seeds", "0-2", "--out", dir.string()},
                                sink, sink);
      if (code != kExitOk && code != kExitAssertion) return {false, scenario + " run exited " + num(code)};
    }
    const auto fa = metric_files(a), fb = metric_files(b);
    same = same && !fa.empty() && fa == fb;
    files += fa.size();
  }
  return {same, num(files) + " metric CSVs compared, " + (same ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"01 zero-gradient lemma suite", lemma_suite},
      {"02 standard pipeline is imperfect, golden control optimal", standard_pipeline},
      {"03 robust arm median optimal and mean >= lambda=1", robust_arm},
      {"04 lambda=1 blend identical to nominal-only", blend_identity},
      {"05 expected sigma gradient equals 2 sigma", sigma_gradient},
      {"06 every BRME head's mean sigma decreases", brme_sigma},
      {"07 order statistics of Gaussian minima", order_statistics},
      {"08 stochastic scenario ordering", stochastic_scenario},
      {"09 minmax scenario stability", minmax_scenario},
      {"10 heterologous normalization", normalization},
      {"11 finite-difference gradient checks", finite_differences},
      {"12 deterministic metric CSVs", determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s (%s) [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
