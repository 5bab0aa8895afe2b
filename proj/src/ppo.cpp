#include "rrlab/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rrlab/io.hpp"

namespace rrlab {

void validate(const PpoConfig& cfg) {
  if (!(cfg.clip_eps > 0.0)) throw std::invalid_argument("ppo: clip_eps must be positive");
  if (!(cfg.beta >= 0.0)) throw std::invalid_argument("ppo: beta must be non-negative");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) throw std::invalid_argument("ppo: gamma must lie in [0, 1)");
  if (cfg.batch_size == 0) throw std::invalid_argument("ppo: batch_size must be positive");
  if (cfg.epochs_per_batch == 0) throw std::invalid_argument("ppo: epochs_per_batch must be positive");
  if (!(cfg.actor_lr > 0.0) || !(cfg.critic_lr > 0.0)) throw std::invalid_argument("ppo: learning rates must be positive");
  if (cfg.hidden_width == 0) throw std::invalid_argument("ppo: hidden_width must be positive");
}

// ----------------------------- policy -----------------------------

PolicyModel::PolicyModel(std::size_t k, FeedForwardNet net) : k_(k), net_(std::move(net)) {
  if (net_.input_dim() != k || net_.output_dim() != k) throw DimensionError("PolicyModel: network must map K -> K");
}

PolicyModel PolicyModel::random(std::size_t k, const PpoConfig& cfg, Rng& rng) {
  std::vector<std::size_t> dims{k};
  for (std::size_t i = 0; i < cfg.policy_hidden_layers; ++i) dims.push_back(cfg.hidden_width);
  dims.push_back(k);
  return PolicyModel(k, FeedForwardNet::random(dims, cfg.activation, rng, cfg.policy_init_scale));
}

std::vector<double> PolicyModel::logits(std::size_t prompt, Tape* tape) const {
  return net_.forward(one_hot(k_, prompt), tape);
}

std::vector<double> PolicyModel::probs(std::size_t prompt) const { return softmax(logits(prompt)); }

std::vector<double> PolicyModel::log_probs(std::size_t prompt) const { return log_softmax(logits(prompt)); }

Matrix PolicyModel::prob_matrix() const {
  Matrix m(k_, k_);
  for (std::size_t x = 0; x < k_; ++x) {
    const auto p = probs(x);
    std::copy(p.begin(), p.end(), m.row(x).begin());
  }
  return m;
}

Matrix PolicyModel::log_prob_matrix() const {
  Matrix m(k_, k_);
  for (std::size_t x = 0; x < k_; ++x) {
    const auto p = log_probs(x);
    std::copy(p.begin(), p.end(), m.row(x).begin());
  }
  return m;
}

PolicyModel perturb_logit(PolicyModel policy, std::size_t response, double delta) {
  FeedForwardNet& net = policy.net();
  const std::size_t last = net.num_layers() - 1;
  net.set_bias(last, response, net.bias(last, response) + delta);
  return policy;
}

double policy_accuracy(const PolicyModel& policy, const ToyWorld& world) {
  return policy_accuracy(policy.prob_matrix(), world);
}

double mean_kl(const PolicyModel& policy, const ReferencePolicy& reference) {
  double total = 0.0;
  for (std::size_t x = 0; x < policy.k(); ++x) {
    const auto lp = policy.log_probs(x);
    for (std::size_t a = 0; a < policy.k(); ++a) {
      total += std::exp(lp[a]) * (lp[a] - reference.log_prob(x, a));
    }
  }
  return total / static_cast<double>(policy.k());
}

// ----------------------------- critic -----------------------------

CriticModel CriticModel::learned(std::size_t k, const PpoConfig& cfg, Rng& rng) {
  CriticModel c;
  c.k_ = k;
  // Zero output layer: V starts at exactly 0, so a zero reward leaves it there.
  c.net_ = FeedForwardNet::random({k, cfg.hidden_width, cfg.hidden_width, 1}, cfg.activation, rng, 0.0);
  return c;
}

CriticModel CriticModel::exact(double value) {
  CriticModel c;
  c.exact_ = value;
  return c;
}

double CriticModel::value(std::size_t prompt) const {
  if (exact_) return *exact_;
  return net_.forward(one_hot(k_, prompt))[0];
}

// ----------------------------- experience -----------------------------

std::vector<Experience> collect(const PolicyModel& policy, const ReferencePolicy& reference, const RewardSignal& signal,
                                const ToyWorld& world, const PpoConfig& cfg, Rng& rng) {
  if (policy.k() != world.k) throw DimensionError("collect: policy K does not match world K");
  const Matrix logp = policy.log_prob_matrix();
  std::vector<Experience> out;
  out.reserve(cfg.batch_size);
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    Experience e;
    e.prompt = rng.below(world.k);
    const double u = rng.uniform();
    double cum = 0.0;
    e.action = world.k - 1;
    for (std::size_t a = 0; a < world.k; ++a) {
      cum += std::exp(logp(e.prompt, a));
      if (u < cum) {
        e.action = a;
        break;
      }
    }
    e.behavior_logprob = logp(e.prompt, e.action);
    e.raw_reward = signal(e.prompt, e.action, rng);
    e.kl_penalty = cfg.beta * (e.behavior_logprob - reference.log_prob(e.prompt, e.action));
    e.shaped_reward = e.raw_reward - e.kl_penalty;
    if (!std::isfinite(e.shaped_reward)) {
      throw NumericError("collect: non-finite shaped reward at prompt " + std::to_string(e.prompt) + ", response " +
                         std::to_string(e.action));
    }
    out.push_back(e);
  }
  return out;
}

std::vector<double> advantages(std::span<const Experience> experiences, const CriticModel& critic) {
  std::vector<double> adv;
  adv.reserve(experiences.size());
  for (const auto& e : experiences) adv.push_back(e.shaped_reward - critic.value(e.prompt));
  return adv;
}

double constant_reward_value(double c, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("constant_reward_value: gamma must lie in [0, 1)");
  return c / (1.0 - gamma);
}

// ----------------------------- update -----------------------------

SurrogateEval clipped_surrogate(const PolicyModel& policy, std::span<const Experience> experiences,
                                std::span<const double> advantages, double clip_eps) {
  if (experiences.size() != advantages.size()) {
    throw DimensionError("clipped_surrogate: advantages are not aligned with experiences");
  }
  if (experiences.empty()) throw std::invalid_argument("clipped_surrogate: empty batch");
  const FeedForwardNet& net = policy.net();
  SurrogateEval out;
  out.grad.assign(net.parameter_count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(experiences.size());
  Tape tape;
  std::vector<double> out_grad(policy.k());
  for (std::size_t i = 0; i < experiences.size(); ++i) {
    const Experience& e = experiences[i];
    const double adv = advantages[i];
    const auto z = policy.logits(e.prompt, &tape);
    const auto lp = log_softmax(z);
    const double ratio = std::exp(lp[e.action] - e.behavior_logprob);
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
    out.value += inv_n * std::min(unclipped, clipped);
    // Only the unclipped branch depends on the parameters.
    if (unclipped > clipped) continue;
    const double coef = inv_n * ratio * adv;
    if (coef == 0.0) continue;
    for (std::size_t a = 0; a < policy.k(); ++a) {
      out_grad[a] = coef * ((a == e.action ? 1.0 : 0.0) - std::exp(lp[a]));
    }
    net.backward(tape, out_grad, out.grad);
  }
  return out;
}

PpoAgent::PpoAgent(PolicyModel p, CriticModel c, const PpoConfig& cfg)
    : policy(std::move(p)),
      critic(std::move(c)),
      actor_opt(AdamConfig{.learning_rate = cfg.actor_lr}, policy.net().parameter_count()),
      critic_opt(AdamConfig{.learning_rate = cfg.critic_lr}, critic.is_exact() ? 0 : critic.net().parameter_count()) {}

UpdateStats ppo_update(PpoAgent& agent, std::span<const Experience> experiences, std::span<const double> advantages,
                       const PpoConfig& cfg) {
  if (experiences.size() != advantages.size()) {
    throw DimensionError("ppo_update: advantages are not aligned with experiences");
  }
  std::vector<double> adv(advantages.begin(), advantages.end());
  if (cfg.normalize_advantages && adv.size() > 1) {
    const double n = static_cast<double>(adv.size());
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : adv) ss += (a - mean) * (a - mean);
    const double sd = std::sqrt(ss / n);
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  UpdateStats stats;
  std::vector<double> descent;
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
    SurrogateEval s = clipped_surrogate(agent.policy, experiences, adv, cfg.clip_eps);
    if (!std::isfinite(s.value)) throw NumericError("ppo_update: non-finite surrogate");
    if (epoch == 0) {
      stats.actor_grad_norm = l2_norm(s.grad);
      stats.first_surrogate = s.value;
    }
    descent.resize(s.grad.size());
    for (std::size_t i = 0; i < s.grad.size(); ++i) descent[i] = -s.grad[i];
    adam_step(agent.policy.net(), descent, agent.actor_opt);
  }

  if (!agent.critic.is_exact()) {
    FeedForwardNet& vnet = agent.critic.net();
    const double inv_n = 1.0 / static_cast<double>(experiences.size());
    Tape tape;
    for (std::size_t epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
      std::vector<double> grad(vnet.parameter_count(), 0.0);
      double loss = 0.0;
      for (const auto& e : experiences) {
        const double v = vnet.forward(one_hot(agent.policy.k(), e.prompt), &tape)[0];
        const double err = v - e.shaped_reward;
        loss += inv_n * err * err;
        const double g[1] = {2.0 * inv_n * err};
        vnet.backward(tape, g, grad);
      }
      if (!std::isfinite(loss)) throw NumericError("ppo_update: non-finite critic loss");
      if (epoch == 0) stats.critic_loss = loss;
      adam_step(vnet, grad, agent.critic_opt);
    }
  }
  return stats;
}

// ----------------------------- records -----------------------------

double RunRecord::accuracy_at(std::size_t step) const {
  if (step == 0) return initial_accuracy;
  if (step > steps.size()) throw std::out_of_range("RunRecord::accuracy_at: step beyond the run");
  return steps[step - 1].accuracy;
}

std::string to_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "step,accuracy,mean_reward,kl,grad_norm,reward_min,reward_max\n";
  for (const auto& s : record.steps) {
    out << s.step << ',' << format_double(s.accuracy) << ',' << format_double(s.mean_reward) << ','
        << format_double(s.kl) << ',' << format_double(s.grad_norm) << ',' << format_double(s.reward_min) << ','
        << format_double(s.reward_max) << '\n';
  }
  return out.str();
}

json to_json(const PpoConfig& c) {
  return json{{"clip_eps", c.clip_eps},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"batch_size", c.batch_size},
              {"epochs_per_batch", c.epochs_per_batch},
              {"actor_lr", c.actor_lr},
              {"critic_lr", c.critic_lr},
              {"hidden_width", c.hidden_width},
              {"policy_hidden_layers", c.policy_hidden_layers},
              {"activation", to_string(c.activation)},
              {"policy_init_scale", c.policy_init_scale},
              {"normalize_advantages", c.normalize_advantages}};
}

PpoConfig ppo_config_from_json(const json& j) {
  PpoConfig c;
  c.clip_eps = j.at("clip_eps").get<double>();
  c.beta = j.at("beta").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs_per_batch = j.at("epochs_per_batch").get<std::size_t>();
  c.actor_lr = j.at("actor_lr").get<double>();
  c.critic_lr = j.at("critic_lr").get<double>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.policy_hidden_layers = j.at("policy_hidden_layers").get<std::size_t>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.policy_init_scale = j.at("policy_init_scale").get<double>();
  c.normalize_advantages = j.at("normalize_advantages").get<bool>();
  validate(c);
  return c;
}

// ----------------------------- training -----------------------------

TrainResult train(PolicyModel policy, const RewardSignal& signal, const ToyWorld& world, const PpoConfig& cfg,
                  std::size_t steps, Rng& rng, const CriticSpec& critic_spec, const ReferencePolicy* reference,
                  const StepObserver& observe) {
  validate(cfg);
  if (steps < 1) throw std::invalid_argument("train: steps must be at least 1");
  const ReferencePolicy ref = reference ? *reference : ReferencePolicy(policy);
  Rng critic_rng = rng.fork("critic");
  CriticModel critic = critic_spec.mode == CriticMode::exact ? CriticModel::exact(critic_spec.exact_value)
                                                              : CriticModel::learned(world.k, cfg, critic_rng);
  PpoAgent agent(std::move(policy), std::move(critic), cfg);

  TrainResult result;
  RunRecord& rec = result.record;
  rec.seed = rng.seed();
  rec.config = to_json(cfg);
  rec.config["steps"] = steps;
  rec.initial_accuracy = policy_accuracy(agent.policy, world);
  rec.initial_kl = mean_kl(agent.policy, ref);
  rec.steps.reserve(steps);

  for (std::size_t s = 1; s <= steps; ++s) {
    const auto batch = collect(agent.policy, ref, signal, world, cfg, rng);
    const auto adv = advantages(batch, agent.critic);
    const UpdateStats us = ppo_update(agent, batch, adv, cfg);

    StepMetrics m;
    m.step = s;
    m.accuracy = policy_accuracy(agent.policy, world);
    m.kl = mean_kl(agent.policy, ref);
    m.grad_norm = us.actor_grad_norm;
    m.reward_min = std::numeric_limits<double>::infinity();
    m.reward_max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& e : batch) {
      sum += e.shaped_reward;
      m.reward_min = std::min(m.reward_min, e.raw_reward);
      m.reward_max = std::max(m.reward_max, e.raw_reward);
    }
    m.mean_reward = sum / static_cast<double>(batch.size());
    rec.steps.push_back(m);
    if (observe) observe(s, agent.policy);
  }
  rec.final_policy = agent.policy.prob_matrix();
  result.policy = std::move(agent.policy);
  return result;
}

Lemma1Result lemma1_check(const PolicyModel& policy, double c, double gamma, PpoConfig cfg, Rng& rng) {
  cfg.beta = 0.0;
  const ToyWorld world = make_world(policy.k());
  const ReferencePolicy ref(policy);
  const RewardSignal signal = RewardSignal::single(constant_source(c));
  const auto batch = collect(policy, ref, signal, world, cfg, rng);

  Lemma1Result out;
  out.q_value = constant_reward_value(c, gamma);
  const CriticModel critic = CriticModel::exact(out.q_value);
  std::vector<double> adv;
  for (const auto& e : batch) {
    // Every state pays the same constant, so Q(s, a) is the discounted value of
    // the observed reward.
    const double q = constant_reward_value(e.shaped_reward, gamma);
    adv.push_back(q - critic.value(e.prompt));
    out.advantage_max_abs = std::max(out.advantage_max_abs, std::abs(adv.back()));
  }
  PpoAgent agent(policy, critic, cfg);
  out.grad_norm = ppo_update(agent, batch, adv, cfg).actor_grad_norm;
  const auto before = policy.net().params();
  const auto after = agent.policy.net().params();
  out.params_unchanged = std::equal(before.begin(), before.end(), after.begin(), after.end());
  return out;
}

DriftResult drift_probe(const PolicyModel& perturbed, const ReferencePolicy& reference, const ToyWorld& world,
                        const PpoConfig& cfg, std::size_t steps, Rng& rng, double reward) {
  const RewardSignal signal = RewardSignal::single(constant_source(reward));
  const TrainResult r = train(perturbed, signal, world, cfg, steps, rng, {CriticMode::learned, 0.0}, &reference);
  DriftResult out;
  out.initial_kl = r.record.initial_kl;
  for (const auto& s : r.record.steps) out.kl_trajectory.push_back(s.kl);
  out.final_kl = out.kl_trajectory.back();
  return out;
}

}  // namespace rrlab
