#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrlab/numerics.hpp"
#include "rrlab/parallel.hpp"
#include "rrlab/toyworld.hpp"

namespace rrlab {

// Raised when a training loss or gradient turns non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bradley-Terry preference probability sigma(r_plus - r_minus).
double bt_prob(double r_plus, double r_minus);

struct RewardNetConfig {
  std::size_t hidden_width = 32;
  std::size_t hidden_layers = 2;
  Activation activation = Activation::relu;
  double output_scale = 1.0;
};

// ---------------------------------------------------------------------------
// Stage 1: scalar Bradley-Terry reward model
// ---------------------------------------------------------------------------

class ScalarRewardModel {
 public:
  ScalarRewardModel() = default;
  ScalarRewardModel(std::size_t k, FeedForwardNet net);

  static ScalarRewardModel random(std::size_t k, const RewardNetConfig& cfg, Rng& rng);

  std::size_t k() const { return k_; }
  const FeedForwardNet& net() const { return net_; }
  FeedForwardNet& net() { return net_; }

  double reward(std::size_t prompt, std::size_t response) const;
  double operator()(std::size_t prompt, std::size_t response) const { return reward(prompt, response); }

 private:
  std::size_t k_ = 0;
  FeedForwardNet net_;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Negative log-likelihood -sum log sigma(r(x,a+) - r(x,a-)) over the batch,
// with its gradient in the model's parameter layout.
LossAndGrad mle_loss(const ScalarRewardModel& rm, std::span<const PreferenceExample> batch);

struct Stage1Config {
  RewardNetConfig net;
  std::size_t steps = 400;
  // 0 trains on the full dataset every step.
  std::size_t batch_size = 0;
  AdamConfig adam{.learning_rate = 1e-2};
};

struct Stage1Trace {
  std::vector<double> loss;
};

ScalarRewardModel train_stage1(const ToyWorld& world, const PreferenceDataset& dataset, const Stage1Config& cfg,
                               Rng& rng, Stage1Trace* trace = nullptr);

// ---------------------------------------------------------------------------
// Stage 2: BRME
// ---------------------------------------------------------------------------

struct GaussianReward {
  double mu = 0.0;
  double sigma = 1.0;
  std::size_t head_id = 0;
};

// mu + eps * sigma
double reparam_sample(const GaussianReward& g, double eps);

// separated: chosen target +alpha*k, rejected target -alpha*k.
// literal:   both targets +alpha*k, the MSE objective exactly as printed.
enum class MseLossMode { separated, literal };

std::string to_string(MseLossMode m);
MseLossMode mse_loss_mode_from_string(const std::string& s);

struct MseHeadLoss {
  double loss = 0.0;
  double d_mu_plus = 0.0;
  double d_sigma_plus = 0.0;
  double d_mu_minus = 0.0;
  double d_sigma_minus = 0.0;
};

// Per-head MSE loss on reparameterized samples, k = p_hat - 1/2.
MseHeadLoss mse_head_loss(const GaussianReward& plus, const GaussianReward& minus, double p_hat, double alpha,
                          double eps_plus, double eps_minus, MseLossMode mode);

enum class PairSide { chosen, rejected };

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

// Monte Carlo estimate of E_eps[d loss / d sigma] for one side of a pair
// whose head output is `out`. Requires n_samples >= 1e4.
McEstimate sigma_grad_expectation(const GaussianReward& out, PairSide side, double p_hat, double alpha,
                                  MseLossMode mode, std::size_t n_samples, std::uint64_t seed,
                                  Exec exec = Exec::parallel);

// Where the shared trunk starts: a copy of the stage-1 RM's hidden layers, or
// a fresh random net of trunk_width.
enum class TrunkInit { stage1, random };

std::string to_string(TrunkInit t);
TrunkInit trunk_init_from_string(const std::string& s);

struct BrmeConfig {
  std::size_t n_heads = 5;
  TrunkInit trunk_init = TrunkInit::stage1;
  std::size_t trunk_width = 32;
  std::size_t head_width = 16;
  Activation activation = Activation::relu;
  double sigma_floor = 1e-4;
};

// Shared trunk (2K -> W -> W, activation on both layers) feeding n heads
// (W -> head_width -> 2). Head output 0 is mu, output 1 is the raw std, mapped
// to sigma = softplus(raw) + sigma_floor.
class BrmeModel {
 public:
  BrmeModel() = default;
  BrmeModel(std::size_t k, FeedForwardNet trunk, std::vector<FeedForwardNet> heads, double sigma_floor);

  static BrmeModel random(std::size_t k, const BrmeConfig& cfg, Rng& rng);
  // Trunk copied from the stage-1 net's two hidden layers (its width and
  // activation win over cfg); heads are random. Throws std::invalid_argument
  // unless the stage-1 net has exactly two hidden layers.
  static BrmeModel from_stage1(const ScalarRewardModel& stage1, const BrmeConfig& cfg, Rng& rng);
  // Dispatches on cfg.trunk_init.
  static BrmeModel initial(const ScalarRewardModel& stage1, const BrmeConfig& cfg, Rng& rng);

  std::size_t k() const { return k_; }
  std::size_t n_heads() const { return heads_.size(); }
  double sigma_floor() const { return sigma_floor_; }
  const FeedForwardNet& trunk() const { return trunk_; }
  FeedForwardNet& trunk() { return trunk_; }
  const std::vector<FeedForwardNet>& heads() const { return heads_; }
  std::vector<FeedForwardNet>& heads() { return heads_; }

  std::vector<double> features(std::size_t prompt, std::size_t response, Tape* tape = nullptr) const;
  GaussianReward head_output(std::size_t head, std::span<const double> features, Tape* tape = nullptr) const;

 private:
  std::size_t k_ = 0;
  FeedForwardNet trunk_;
  std::vector<FeedForwardNet> heads_;
  double sigma_floor_ = 1e-4;
};

// All heads' Gaussian rewards for (x, a).
std::vector<GaussianReward> brme_predict(const BrmeModel& brme, std::size_t prompt, std::size_t response);

// mu of the head with the smallest sigma; the lowest head_id wins ties.
double nominal_reward(std::span<const GaussianReward> predictions);

McEstimate sigma_grad_expectation(const BrmeModel& brme, std::size_t head, std::size_t prompt, std::size_t response,
                                  PairSide side, double p_hat, double alpha, MseLossMode mode,
                                  std::size_t n_samples, std::uint64_t seed, Exec exec = Exec::parallel);

struct HeadAssignment {
  std::size_t n_heads = 0;
  std::vector<std::size_t> head_of;

  std::vector<std::size_t> members(std::size_t head) const;
  std::vector<std::size_t> counts() const;
};

// Uniform random head per example. Heads left empty are then filled one at a
// time (ascending head id) by moving the highest-index example out of the
// currently largest head (lowest head id on ties).
HeadAssignment partition_dataset(std::size_t n_examples, std::size_t n_heads, Rng& rng);

struct Stage2Config {
  std::size_t steps = 300;
  double alpha = 2.0;
  MseLossMode mode = MseLossMode::separated;
  AdamConfig adam{.learning_rate = 3e-3};
  bool train_trunk = false;
};

struct Stage2Trace {
  // Mean per-head loss at each step (averaged over the head's examples).
  std::vector<std::vector<double>> head_loss;
  std::vector<double> initial_mean_sigma;
  std::vector<double> final_mean_sigma;
  double min_sigma_seen = 0.0;
};

// Mean sigma of each head over every (x, a+) and (x, a-) input in the dataset.
std::vector<double> mean_head_sigma(const BrmeModel& brme, const PreferenceDataset& dataset);

BrmeModel train_stage2(BrmeModel brme, const ScalarRewardModel& stage1, const PreferenceDataset& dataset,
                       const HeadAssignment& assignment, const Stage2Config& cfg, Rng& rng,
                       Stage2Trace* trace = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

json to_json(const FeedForwardNet& net);
FeedForwardNet net_from_json(const json& j);
json checkpoint_json(const ScalarRewardModel& rm, std::uint64_t seed);
ScalarRewardModel scalar_rm_from_json(const json& j);
json checkpoint_json(const BrmeModel& brme, MseLossMode mode, std::uint64_t seed);
BrmeModel brme_from_json(const json& j);

}  // namespace rrlab
