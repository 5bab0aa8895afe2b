#include "rrlab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rrlab/io.hpp"

namespace rrlab {

// ----------------------------- sources -----------------------------

RewardSource deterministic_source(RewardFn fn) {
  return [fn = std::move(fn)](std::size_t x, std::size_t a, Rng&) { return fn(x, a); };
}

RewardSource scalar_rm_source(std::shared_ptr<const ScalarRewardModel> rm) {
  return [rm = std::move(rm)](std::size_t x, std::size_t a, Rng&) { return rm->reward(x, a); };
}

RewardSource brme_head_source(std::shared_ptr<const BrmeModel> brme, std::size_t head) {
  if (head >= brme->n_heads()) throw std::out_of_range("brme_head_source: head index out of range");
  return [brme = std::move(brme), head](std::size_t x, std::size_t a, Rng&) {
    return brme->head_output(head, brme->features(x, a)).mu;
  };
}

RewardSource brme_nominal_source(std::shared_ptr<const BrmeModel> brme) {
  return [brme = std::move(brme)](std::size_t x, std::size_t a, Rng&) {
    const auto preds = brme_predict(*brme, x, a);
    return nominal_reward(preds);
  };
}

RewardSource golden_source(const ToyWorld& world) {
  return [g = world.golden](std::size_t x, std::size_t a, Rng&) { return g(x, a); };
}

RewardSource constant_source(double c) {
  return [c](std::size_t, std::size_t, Rng&) { return c; };
}

std::string to_string(SetKind k) {
  switch (k) {
    case SetKind::seed_ensemble: return "seed_ensemble";
    case SetKind::brme_heads: return "brme_heads";
    case SetKind::synthetic_random: return "synthetic_random";
    case SetKind::constant: return "constant";
  }
  return "unknown";
}

// ----------------------------- integration -----------------------------

std::string to_string(IntegrationMode m) {
  switch (m) {
    case IntegrationMode::nominal_only: return "nominal_only";
    case IntegrationMode::min: return "min";
    case IntegrationMode::max: return "max";
    case IntegrationMode::mean: return "mean";
    case IntegrationMode::blend: return "blend";
  }
  return "unknown";
}

IntegrationMode integration_mode_from_string(const std::string& s) {
  for (auto m : {IntegrationMode::nominal_only, IntegrationMode::min, IntegrationMode::max, IntegrationMode::mean,
                 IntegrationMode::blend}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown integration mode '" + s + "'");
}

IntegrationStrategy IntegrationStrategy::blend(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("blend: lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  return IntegrationStrategy(IntegrationMode::blend, lambda);
}

std::string IntegrationStrategy::label() const {
  if (mode_ == IntegrationMode::blend) return "blend_" + format_fixed(*lambda_, 2);
  return to_string(mode_);
}

double integrate(const IntegrationStrategy& strategy, double nominal, std::span<const double> members) {
  if (members.empty()) throw std::invalid_argument("integrate: empty member list");
  switch (strategy.mode()) {
    case IntegrationMode::nominal_only: return nominal;
    case IntegrationMode::min: return *std::min_element(members.begin(), members.end());
    case IntegrationMode::max: return *std::max_element(members.begin(), members.end());
    case IntegrationMode::mean:
      return std::accumulate(members.begin(), members.end(), 0.0) / static_cast<double>(members.size());
    case IntegrationMode::blend: {
      const double lambda = *strategy.lambda();
      const double worst = *std::min_element(members.begin(), members.end());
      return lambda * nominal + (1.0 - lambda) * worst;
    }
  }
  throw std::logic_error("integrate: unhandled mode");
}

RewardSignal::RewardSignal(RewardSource nominal, std::shared_ptr<const UncertaintySet> set,
                           IntegrationStrategy strategy)
    : nominal_(std::move(nominal)), set_(std::move(set)), strategy_(strategy) {
  if (!set_ || set_->sources.empty()) throw std::invalid_argument("RewardSignal: uncertainty set is empty");
}

RewardSignal RewardSignal::single(RewardSource source) {
  auto set = std::make_shared<UncertaintySet>();
  set->kind = SetKind::constant;
  set->sources = {source};
  set->ids = {"source"};
  return RewardSignal(std::move(source), std::move(set), IntegrationStrategy::nominal_only());
}

double RewardSignal::operator()(std::size_t prompt, std::size_t response, Rng& rng) const {
  const double nominal = nominal_(prompt, response, rng);
  std::vector<double> members(set_->sources.size());
  for (std::size_t i = 0; i < members.size(); ++i) members[i] = set_->sources[i](prompt, response, rng);
  return integrate(strategy_, nominal, members);
}

// ----------------------------- sets -----------------------------

SeedEnsemble build_seed_ensemble(const ToyWorld& world, const PreferenceDataset& dataset, std::size_t n_extra,
                                 const Stage1Config& base_config, std::uint64_t master_seed) {
  if (n_extra < 1) throw std::invalid_argument("build_seed_ensemble: n_extra must be at least 1");
  SeedEnsemble out;
  out.set.kind = SetKind::seed_ensemble;
  for (std::size_t i = 0; i < n_extra; ++i) {
    const std::uint64_t seed = derive_seed(master_seed, "ensemble/" + std::to_string(i));
    Rng rng(seed);
    auto rm = std::make_shared<const ScalarRewardModel>(train_stage1(world, dataset, base_config, rng));
    out.models.push_back(rm);
    out.seeds.push_back(seed);
    out.set.sources.push_back(scalar_rm_source(rm));
    out.set.ids.push_back("rm_" + std::to_string(i));
  }
  return out;
}

UncertaintySet brme_head_set(std::shared_ptr<const BrmeModel> brme) {
  UncertaintySet set;
  set.kind = SetKind::brme_heads;
  for (std::size_t h = 0; h < brme->n_heads(); ++h) {
    set.sources.push_back(brme_head_source(brme, h));
    set.ids.push_back("head_" + std::to_string(h));
  }
  return set;
}

UncertaintySet make_synthetic_set(SyntheticKind kind, std::size_t n) {
  if (n < 1) throw std::invalid_argument("make_synthetic_set: n must be at least 1");
  UncertaintySet set;
  set.kind = kind == SyntheticKind::gaussian_random ? SetKind::synthetic_random : SetKind::constant;
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == SyntheticKind::gaussian_random) {
      set.sources.push_back([](std::size_t, std::size_t, Rng& rng) { return rng.normal(); });
      set.ids.push_back("random_" + std::to_string(i));
    } else {
      set.sources.push_back(constant_source(0.0));
      set.ids.push_back("zero_" + std::to_string(i));
    }
  }
  return set;
}

// ----------------------------- normalization -----------------------------

SourceStats calibrate_source(const RewardSource& source, std::span<const std::pair<std::size_t, std::size_t>> probes,
                             Rng& rng, std::string source_id) {
  if (probes.size() < 2) throw std::invalid_argument("calibrate_source: need at least 2 probes");
  std::vector<double> vals;
  vals.reserve(probes.size());
  for (const auto& [x, a] : probes) vals.push_back(source(x, a, rng));
  const double n = static_cast<double>(vals.size());
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) {
    throw std::invalid_argument("calibrate_source: source '" + source_id + "' has zero variance on the probes");
  }
  return {std::move(source_id), mean, sd, vals.size()};
}

double normalize_reward(double raw, const SourceStats& stats) { return (raw - stats.mean) / stats.std; }

RewardSource normalized_source(RewardSource source, SourceStats stats) {
  return [source = std::move(source), stats = std::move(stats)](std::size_t x, std::size_t a, Rng& rng) {
    return normalize_reward(source(x, a, rng), stats);
  };
}

// ----------------------------- range stats -----------------------------

RangeEntry summarize(std::string id, std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  RangeEntry e;
  e.id = std::move(id);
  e.min = *std::min_element(values.begin(), values.end());
  e.max = *std::max_element(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - e.mean) * (v - e.mean);
  e.std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return e;
}

RewardRangeStats range_stats(const UncertaintySet& set, const IntegrationStrategy& strategy,
                             std::span<const std::pair<std::size_t, std::size_t>> probe_grid, Rng& rng,
                             const RewardSource* nominal) {
  if (probe_grid.empty()) throw std::invalid_argument("range_stats: empty probe grid");
  if (set.sources.empty()) throw std::invalid_argument("range_stats: empty uncertainty set");
  const std::size_t n = set.sources.size();
  std::vector<std::vector<double>> per_source(n);
  std::vector<double> integrated;
  std::vector<double> members(n);
  std::size_t under = 0;
  for (const auto& [x, a] : probe_grid) {
    const double nom = nominal ? (*nominal)(x, a, rng) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      members[i] = set.sources[i](x, a, rng);
      per_source[i].push_back(members[i]);
    }
    integrated.push_back(integrate(strategy, nominal ? nom : members[0], members));
    const double lo = *std::min_element(members.begin(), members.end());
    const double avg = std::accumulate(members.begin(), members.end(), 0.0) / static_cast<double>(n);
    if (lo < avg) ++under;
  }
  RewardRangeStats out;
  for (std::size_t i = 0; i < n; ++i) {
    out.sources.push_back(summarize(i < set.ids.size() ? set.ids[i] : "source_" + std::to_string(i), per_source[i]));
  }
  out.integrated = summarize("integrated_" + strategy.label(), integrated);
  out.underscore_fraction = static_cast<double>(under) / static_cast<double>(probe_grid.size());
  return out;
}

json to_json(const SourceStats& s) {
  return json{{"source_id", s.source_id}, {"mean", s.mean}, {"std", s.std}, {"calibration_size", s.calibration_size}};
}

namespace {
json entry_json(const RangeEntry& e) {
  return json{{"id", e.id}, {"min", e.min}, {"max", e.max}, {"mean", e.mean}, {"std", e.std}};
}
}  // namespace

json to_json(const RewardRangeStats& s) {
  json src = json::array();
  for (const auto& e : s.sources) src.push_back(entry_json(e));
  return json{{"sources", src}, {"integrated", entry_json(s.integrated)}, {"underscore_fraction", s.underscore_fraction}};
}

std::string range_stats_csv(const RewardRangeStats& s) {
  std::ostringstream out;
  out << "source_id,min,max,mean,std\n";
  auto row = [&](const RangeEntry& e) {
    out << e.id << ',' << format_double(e.min) << ',' << format_double(e.max) << ',' << format_double(e.mean) << ','
        << format_double(e.std) << '\n';
  };
  for (const auto& e : s.sources) row(e);
  row(s.integrated);
  return out.str();
}

}  // namespace rrlab
