#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rrlab/numerics.hpp"
#include "rrlab/rewardnet.hpp"
#include "rrlab/toyworld.hpp"

namespace rrlab {

// A reward source scores (prompt, response). Stochastic sources draw from the
// caller's Rng; deterministic ones ignore it.
using RewardSource = std::function<double(std::size_t prompt, std::size_t response, Rng& rng)>;

RewardSource deterministic_source(RewardFn fn);
RewardSource scalar_rm_source(std::shared_ptr<const ScalarRewardModel> rm);
RewardSource brme_head_source(std::shared_ptr<const BrmeModel> brme, std::size_t head);
RewardSource brme_nominal_source(std::shared_ptr<const BrmeModel> brme);
RewardSource golden_source(const ToyWorld& world);
RewardSource constant_source(double c);

enum class SetKind { seed_ensemble, brme_heads, synthetic_random, constant };

std::string to_string(SetKind k);

struct UncertaintySet {
  SetKind kind = SetKind::constant;
  std::vector<RewardSource> sources;
  std::vector<std::string> ids;

  std::size_t size() const { return sources.size(); }
};

// ---------------------------------------------------------------------------
// Integration strategies
// ---------------------------------------------------------------------------

enum class IntegrationMode { nominal_only, min, max, mean, blend };

std::string to_string(IntegrationMode m);
IntegrationMode integration_mode_from_string(const std::string& s);

class IntegrationStrategy {
 public:
  static IntegrationStrategy nominal_only() { return IntegrationStrategy(IntegrationMode::nominal_only, {}); }
  static IntegrationStrategy min() { return IntegrationStrategy(IntegrationMode::min, {}); }
  static IntegrationStrategy max() { return IntegrationStrategy(IntegrationMode::max, {}); }
  static IntegrationStrategy mean() { return IntegrationStrategy(IntegrationMode::mean, {}); }
  // lambda * nominal + (1 - lambda) * min(members); lambda in [0, 1].
  static IntegrationStrategy blend(double lambda);

  IntegrationMode mode() const { return mode_; }
  std::optional<double> lambda() const { return lambda_; }
  std::string label() const;

 private:
  IntegrationStrategy(IntegrationMode m, std::optional<double> l) : mode_(m), lambda_(l) {}
  IntegrationMode mode_;
  std::optional<double> lambda_;
};

double integrate(const IntegrationStrategy& strategy, double nominal, std::span<const double> members);

// The reward PPO optimizes: a nominal source and an uncertainty set combined
// per (x, a). Every source is queried on every call whatever the strategy, so
// stochastic sources consume the Rng identically across strategies.
class RewardSignal {
 public:
  RewardSignal(RewardSource nominal, std::shared_ptr<const UncertaintySet> set, IntegrationStrategy strategy);

  static RewardSignal single(RewardSource source);

  double operator()(std::size_t prompt, std::size_t response, Rng& rng) const;
  const IntegrationStrategy& strategy() const { return strategy_; }
  const UncertaintySet& set() const { return *set_; }

 private:
  RewardSource nominal_;
  std::shared_ptr<const UncertaintySet> set_;
  IntegrationStrategy strategy_;
};

// ---------------------------------------------------------------------------
// Uncertainty-set construction
// ---------------------------------------------------------------------------

struct SeedEnsemble {
  UncertaintySet set;
  std::vector<std::shared_ptr<const ScalarRewardModel>> models;
  std::vector<std::uint64_t> seeds;
};

// n_extra stage-1 models trained with base_config, member i seeded from
// derive_seed(master_seed, "ensemble/i").
SeedEnsemble build_seed_ensemble(const ToyWorld& world, const PreferenceDataset& dataset, std::size_t n_extra,
                                 const Stage1Config& base_config, std::uint64_t master_seed);

UncertaintySet brme_head_set(std::shared_ptr<const BrmeModel> brme);

enum class SyntheticKind { gaussian_random, constant_zero };

// gaussian_random sources draw a fresh N(0,1) per query from the caller's Rng.
UncertaintySet make_synthetic_set(SyntheticKind kind, std::size_t n);

// ---------------------------------------------------------------------------
// Heterologous normalization
// ---------------------------------------------------------------------------

struct SourceStats {
  std::string source_id;
  double mean = 0.0;
  // Sample std with the n - 1 denominator.
  double std = 1.0;
  std::size_t calibration_size = 0;
};

// Throws std::invalid_argument with fewer than 2 probes or zero variance.
SourceStats calibrate_source(const RewardSource& source, std::span<const std::pair<std::size_t, std::size_t>> probes,
                             Rng& rng, std::string source_id = "source");

double normalize_reward(double raw, const SourceStats& stats);

RewardSource normalized_source(RewardSource source, SourceStats stats);

// ---------------------------------------------------------------------------
// Range statistics
// ---------------------------------------------------------------------------

struct RangeEntry {
  std::string id;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

struct RewardRangeStats {
  std::vector<RangeEntry> sources;
  RangeEntry integrated;
  // Fraction of probes where min(members) is below the cross-source mean.
  double underscore_fraction = 0.0;
};

// Scores every probe with each source and with the integrated signal. The
// nominal reward is the first source unless one is given.
RewardRangeStats range_stats(const UncertaintySet& set, const IntegrationStrategy& strategy,
                             std::span<const std::pair<std::size_t, std::size_t>> probe_grid, Rng& rng,
                             const RewardSource* nominal = nullptr);

RangeEntry summarize(std::string id, std::span<const double> values);

json to_json(const SourceStats& s);
json to_json(const RewardRangeStats& s);
// CSV rows "source_id,min,max,mean,std" with a header line.
std::string range_stats_csv(const RewardRangeStats& s);

}  // namespace rrlab
