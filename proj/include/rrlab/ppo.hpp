#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrlab/ensemble.hpp"
#include "rrlab/numerics.hpp"
#include "rrlab/toyworld.hpp"

namespace rrlab {

// Single-step PPO on the toy world: one prompt, one response, terminal.

struct PpoConfig {
  double clip_eps = 0.2;
  // KL-to-reference coefficient, applied as per-sample reward shaping.
  double beta = 0.05;
  // Only used by the constant-reward value formula; episodes are single-step.
  double gamma = 0.0;
  std::size_t batch_size = 64;
  std::size_t epochs_per_batch = 4;
  double actor_lr = 3e-3;
  double critic_lr = 1e-2;
  std::size_t hidden_width = 32;
  // Hidden layers of the policy net; 0 gives a linear map from one-hot(prompt)
  // to logits. The critic always has two hidden layers.
  std::size_t policy_hidden_layers = 2;
  Activation activation = Activation::relu;
  // Scale of the policy's last-layer init; small values start near uniform.
  double policy_init_scale = 0.1;
  bool normalize_advantages = false;
};

void validate(const PpoConfig& cfg);

class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(std::size_t k, FeedForwardNet net);

  static PolicyModel random(std::size_t k, const PpoConfig& cfg, Rng& rng);

  std::size_t k() const { return k_; }
  const FeedForwardNet& net() const { return net_; }
  FeedForwardNet& net() { return net_; }

  std::vector<double> logits(std::size_t prompt, Tape* tape = nullptr) const;
  std::vector<double> probs(std::size_t prompt) const;
  std::vector<double> log_probs(std::size_t prompt) const;
  // Row x holds pi(.|x).
  Matrix prob_matrix() const;
  Matrix log_prob_matrix() const;

 private:
  std::size_t k_ = 0;
  FeedForwardNet net_;
};

// Adds delta to the output bias of `response`, i.e. to that logit for every prompt.
PolicyModel perturb_logit(PolicyModel policy, std::size_t response, double delta);

double policy_accuracy(const PolicyModel& policy, const ToyWorld& world);

// Frozen snapshot of a policy's log-probabilities.
class ReferencePolicy {
 public:
  explicit ReferencePolicy(const PolicyModel& policy) : log_probs_(policy.log_prob_matrix()) {}
  double log_prob(std::size_t prompt, std::size_t response) const { return log_probs_(prompt, response); }
  const Matrix& log_probs() const { return log_probs_; }

 private:
  Matrix log_probs_;
};

// Mean over prompts of KL(pi(.|x) || pi_0(.|x)).
double mean_kl(const PolicyModel& policy, const ReferencePolicy& reference);

class CriticModel {
 public:
  static CriticModel learned(std::size_t k, const PpoConfig& cfg, Rng& rng);
  // Analytically exact constant value function.
  static CriticModel exact(double value);

  bool is_exact() const { return exact_.has_value(); }
  double value(std::size_t prompt) const;
  FeedForwardNet& net() { return net_; }
  const FeedForwardNet& net() const { return net_; }

 private:
  std::size_t k_ = 0;
  FeedForwardNet net_;
  std::optional<double> exact_;
};

struct Experience {
  std::size_t prompt = 0;
  std::size_t action = 0;
  double behavior_logprob = 0.0;
  double shaped_reward = 0.0;
  // Integrated reward before the KL penalty.
  double raw_reward = 0.0;
  // beta * (log pi(a|x) - log pi_0(a|x))
  double kl_penalty = 0.0;
};

// batch_size experiences with uniform prompts and a ~ pi(.|x).
std::vector<Experience> collect(const PolicyModel& policy, const ReferencePolicy& reference, const RewardSignal& signal,
                                const ToyWorld& world, const PpoConfig& cfg, Rng& rng);

// Single-step advantage: shaped_reward - V(x).
std::vector<double> advantages(std::span<const Experience> experiences, const CriticModel& critic);

// Value of receiving reward c forever under discount gamma: c / (1 - gamma).
double constant_reward_value(double c, double gamma);

struct SurrogateEval {
  // Mean clipped surrogate over the batch.
  double value = 0.0;
  // Gradient of `value` with respect to the policy parameters (ascent direction).
  std::vector<double> grad;
};

SurrogateEval clipped_surrogate(const PolicyModel& policy, std::span<const Experience> experiences,
                                std::span<const double> advantages, double clip_eps);

struct PpoAgent {
  PolicyModel policy;
  CriticModel critic;
  AdamState actor_opt;
  AdamState critic_opt;

  PpoAgent(PolicyModel p, CriticModel c, const PpoConfig& cfg);
};

struct UpdateStats {
  // Norm of the first pass's actor gradient.
  double actor_grad_norm = 0.0;
  double first_surrogate = 0.0;
  double critic_loss = 0.0;
};

UpdateStats ppo_update(PpoAgent& agent, std::span<const Experience> experiences, std::span<const double> advantages,
                       const PpoConfig& cfg);

struct StepMetrics {
  std::size_t step = 0;
  double accuracy = 0.0;
  double mean_reward = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  double reward_min = 0.0;
  double reward_max = 0.0;
};

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  json config;
  double initial_accuracy = 0.0;
  double initial_kl = 0.0;
  std::vector<StepMetrics> steps;
  Matrix final_policy;

  double final_accuracy() const { return steps.empty() ? initial_accuracy : steps.back().accuracy; }
  // Accuracy after `step` updates (step 0 is the initial policy).
  double accuracy_at(std::size_t step) const;
};

std::string to_csv(const RunRecord& record);
json to_json(const PpoConfig& cfg);
PpoConfig ppo_config_from_json(const json& j);

enum class CriticMode { learned, exact };

struct CriticSpec {
  CriticMode mode = CriticMode::learned;
  double exact_value = 0.0;
};

struct TrainResult {
  RunRecord record;
  PolicyModel policy;
};

// Called after every update with the step number and the updated policy.
using StepObserver = std::function<void(std::size_t, const PolicyModel&)>;

// collect -> advantages -> update for `steps` iterations. The reference is
// frozen at the starting policy unless one is given.
TrainResult train(PolicyModel policy, const RewardSignal& signal, const ToyWorld& world, const PpoConfig& cfg,
                  std::size_t steps, Rng& rng, const CriticSpec& critic = {},
                  const ReferencePolicy* reference = nullptr, const StepObserver& observe = {});

struct Lemma1Result {
  double q_value = 0.0;
  double advantage_max_abs = 0.0;
  double grad_norm = 0.0;
  bool params_unchanged = false;
};

// Constant reward c, beta = 0, exact critic V = Q = c / (1 - gamma). Runs one
// collect/advantage/update cycle through the ordinary pipeline.
Lemma1Result lemma1_check(const PolicyModel& policy, double c, double gamma, PpoConfig cfg, Rng& rng);

struct DriftResult {
  double initial_kl = 0.0;
  double final_kl = 0.0;
  std::vector<double> kl_trajectory;
};

// Trains a perturbed policy under a constant reward with a learned critic and
// tracks KL to the reference.
DriftResult drift_probe(const PolicyModel& perturbed, const ReferencePolicy& reference, const ToyWorld& world,
                        const PpoConfig& cfg, std::size_t steps, Rng& rng, double reward = 0.0);

}  // namespace rrlab
