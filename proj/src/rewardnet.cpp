#include "rrlab/rewardnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rrlab {

double bt_prob(double r_plus, double r_minus) { return sigmoid(r_plus - r_minus); }

// ----------------------------- ScalarRewardModel -----------------------------

namespace {

std::vector<std::size_t> mlp_dims(std::size_t in, std::size_t width, std::size_t layers, std::size_t out) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i < layers; ++i) dims.push_back(width);
  dims.push_back(out);
  return dims;
}

void check_finite(double loss, std::span<const double> grad, const char* what, std::size_t step) {
  bool ok = std::isfinite(loss);
  for (double g : grad) ok = ok && std::isfinite(g);
  if (!ok) {
    throw TrainingDiverged(std::string(what) + ": non-finite loss or gradient at step " + std::to_string(step) +
                           " (loss = " + std::to_string(loss) + ")");
  }
}

}  // namespace

ScalarRewardModel::ScalarRewardModel(std::size_t k, FeedForwardNet net) : k_(k), net_(std::move(net)) {
  if (net_.input_dim() != 2 * k || net_.output_dim() != 1) {
    throw DimensionError("ScalarRewardModel: network must map 2K inputs to one output");
  }
}

ScalarRewardModel ScalarRewardModel::random(std::size_t k, const RewardNetConfig& cfg, Rng& rng) {
  return ScalarRewardModel(
      k, FeedForwardNet::random(mlp_dims(2 * k, cfg.hidden_width, cfg.hidden_layers, 1), cfg.activation, rng,
                                cfg.output_scale));
}

double ScalarRewardModel::reward(std::size_t prompt, std::size_t response) const {
  return net_.forward(encode_pair(k_, prompt, response))[0];
}

LossAndGrad mle_loss(const ScalarRewardModel& rm, std::span<const PreferenceExample> batch) {
  if (batch.empty()) throw std::invalid_argument("mle_loss: empty batch");
  const FeedForwardNet& net = rm.net();
  LossAndGrad out;
  out.grad.assign(net.parameter_count(), 0.0);
  Tape tp, tm;
  for (const auto& e : batch) {
    const double rp = net.forward(encode_pair(rm.k(), e.prompt, e.chosen), &tp)[0];
    const double rn = net.forward(encode_pair(rm.k(), e.prompt, e.rejected), &tm)[0];
    const double margin = rp - rn;
    out.loss += softplus(-margin);
    const double g = -sigmoid(-margin);
    const double gp[1] = {g};
    const double gn[1] = {-g};
    net.backward(tp, gp, out.grad);
    net.backward(tm, gn, out.grad);
  }
  if (!std::isfinite(out.loss)) throw NumericError("mle_loss: non-finite loss");
  return out;
}

ScalarRewardModel train_stage1(const ToyWorld& world, const PreferenceDataset& dataset, const Stage1Config& cfg,
                               Rng& rng, Stage1Trace* trace) {
  if (dataset.examples.empty()) throw std::invalid_argument("train_stage1: empty dataset");
  if (dataset.k != world.k) throw std::invalid_argument("train_stage1: dataset K does not match world K");
  ScalarRewardModel rm = ScalarRewardModel::random(world.k, cfg.net, rng);
  AdamState opt(cfg.adam, rm.net().parameter_count());
  const auto& all = dataset.examples;
  const std::size_t bs = cfg.batch_size == 0 ? all.size() : std::min(cfg.batch_size, all.size());
  std::vector<std::size_t> order(all.size());
  std::vector<PreferenceExample> batch;

  if (trace) trace->loss = {mle_loss(rm, all).loss};
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    LossAndGrad lg;
    if (bs == all.size()) {
      lg = mle_loss(rm, all);
    } else {
      std::iota(order.begin(), order.end(), std::size_t{0});
      batch.clear();
      for (std::size_t i = 0; i < bs; ++i) {
        const std::size_t j = i + rng.below(order.size() - i);
        std::swap(order[i], order[j]);
        batch.push_back(all[order[i]]);
      }
      lg = mle_loss(rm, batch);
    }
    check_finite(lg.loss, lg.grad, "train_stage1", step);
    adam_step(rm.net(), lg.grad, opt);
    if (trace) trace->loss.push_back(mle_loss(rm, all).loss);
  }
  return rm;
}

// ----------------------------- MSE head loss -----------------------------

double reparam_sample(const GaussianReward& g, double eps) { return g.mu + eps * g.sigma; }

std::string to_string(MseLossMode m) { return m == MseLossMode::separated ? "separated" : "literal"; }

MseLossMode mse_loss_mode_from_string(const std::string& s) {
  if (s == "separated") return MseLossMode::separated;
  if (s == "literal") return MseLossMode::literal;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected separated or literal)");
}

std::string to_string(TrunkInit t) { return t == TrunkInit::stage1 ? "stage1" : "random"; }

TrunkInit trunk_init_from_string(const std::string& s) {
  if (s == "stage1") return TrunkInit::stage1;
  if (s == "random") return TrunkInit::random;
  throw std::invalid_argument("unknown trunk init '" + s + "' (expected stage1 or random)");
}

namespace {

double side_target(PairSide side, double p_hat, double alpha, MseLossMode mode) {
  const double t = alpha * (p_hat - 0.5);
  if (side == PairSide::chosen || mode == MseLossMode::literal) return t;
  return -t;
}

void check_p_hat(double p_hat) {
  if (!(p_hat > 0.0 && p_hat < 1.0)) {
    throw std::invalid_argument("mse_head_loss: p_hat must lie in (0, 1), got " + std::to_string(p_hat));
  }
}

}  // namespace

MseHeadLoss mse_head_loss(const GaussianReward& plus, const GaussianReward& minus, double p_hat, double alpha,
                          double eps_plus, double eps_minus, MseLossMode mode) {
  check_p_hat(p_hat);
  const double rp = reparam_sample(plus, eps_plus);
  const double rn = reparam_sample(minus, eps_minus);
  const double ep = rp - side_target(PairSide::chosen, p_hat, alpha, mode);
  const double en = rn - side_target(PairSide::rejected, p_hat, alpha, mode);
  MseHeadLoss out;
  out.loss = ep * ep + en * en;
  out.d_mu_plus = 2.0 * ep;
  out.d_sigma_plus = 2.0 * eps_plus * ep;
  out.d_mu_minus = 2.0 * en;
  out.d_sigma_minus = 2.0 * eps_minus * en;
  return out;
}

McEstimate sigma_grad_expectation(const GaussianReward& out, PairSide side, double p_hat, double alpha,
                                  MseLossMode mode, std::size_t n_samples, std::uint64_t seed, Exec exec) {
  if (n_samples < 10000) throw std::invalid_argument("sigma_grad_expectation: need at least 1e4 samples");
  check_p_hat(p_hat);
  const double target = side_target(side, p_hat, alpha, mode);
  const double mu = out.mu;
  const double sigma = out.sigma;
  const Moments m = monte_carlo_moments(
      n_samples, seed,
      [=](Rng& rng) {
        const double eps = rng.normal();
        return 2.0 * eps * (mu + eps * sigma - target);
      },
      exec);
  return {m.mean(), m.std_error(), m.count};
}

// ----------------------------- BRME -----------------------------

BrmeModel::BrmeModel(std::size_t k, FeedForwardNet trunk, std::vector<FeedForwardNet> heads, double sigma_floor)
    : k_(k), trunk_(std::move(trunk)), heads_(std::move(heads)), sigma_floor_(sigma_floor) {
  if (heads_.size() < 2) throw std::invalid_argument("BrmeModel: need at least two heads");
  if (!(sigma_floor_ > 0.0)) throw std::invalid_argument("BrmeModel: sigma_floor must be positive");
  if (trunk_.input_dim() != 2 * k) throw DimensionError("BrmeModel: trunk input must be 2K");
  for (const auto& h : heads_) {
    if (h.input_dim() != trunk_.output_dim() || h.output_dim() != 2) {
      throw DimensionError("BrmeModel: each head must map trunk features to (mu, raw_sigma)");
    }
  }
}

BrmeModel BrmeModel::random(std::size_t k, const BrmeConfig& cfg, Rng& rng) {
  FeedForwardNet trunk =
      FeedForwardNet::random({2 * k, cfg.trunk_width, cfg.trunk_width}, cfg.activation, rng);
  std::vector<FeedForwardNet> heads;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    heads.push_back(FeedForwardNet::random({cfg.trunk_width, cfg.head_width, 2}, cfg.activation, rng));
  }
  return BrmeModel(k, std::move(trunk), std::move(heads), cfg.sigma_floor);
}

BrmeModel BrmeModel::from_stage1(const ScalarRewardModel& stage1, const BrmeConfig& cfg, Rng& rng) {
  const FeedForwardNet& net = stage1.net();
  const auto& dims = net.layer_dims();
  if (dims.size() != 4) throw std::invalid_argument("stage-1 trunk init needs a net with exactly two hidden layers");
  FeedForwardNet trunk({dims[0], dims[1], dims[2]}, net.activation());
  for (std::size_t layer = 0; layer < 2; ++layer) {
    for (std::size_t o = 0; o < dims[layer + 1]; ++o) {
      trunk.set_bias(layer, o, net.bias(layer, o));
      for (std::size_t i = 0; i < dims[layer]; ++i) trunk.set_weight(layer, o, i, net.weight(layer, o, i));
    }
  }
  std::vector<FeedForwardNet> heads;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    heads.push_back(FeedForwardNet::random({dims[2], cfg.head_width, 2}, cfg.activation, rng));
  }
  return BrmeModel(stage1.k(), std::move(trunk), std::move(heads), cfg.sigma_floor);
}

BrmeModel BrmeModel::initial(const ScalarRewardModel& stage1, const BrmeConfig& cfg, Rng& rng) {
  return cfg.trunk_init == TrunkInit::stage1 ? from_stage1(stage1, cfg, rng) : random(stage1.k(), cfg, rng);
}

std::vector<double> BrmeModel::features(std::size_t prompt, std::size_t response, Tape* tape) const {
  std::vector<double> z = trunk_.forward(encode_pair(k_, prompt, response), tape);
  for (double& v : z) v = trunk_.activation() == Activation::relu ? std::max(v, 0.0) : std::tanh(v);
  return z;
}

GaussianReward BrmeModel::head_output(std::size_t head, std::span<const double> features, Tape* tape) const {
  const std::vector<double> o = heads_.at(head).forward(features, tape);
  return {o[0], softplus(o[1]) + sigma_floor_, head};
}

std::vector<GaussianReward> brme_predict(const BrmeModel& brme, std::size_t prompt, std::size_t response) {
  const std::vector<double> f = brme.features(prompt, response);
  std::vector<GaussianReward> out;
  out.reserve(brme.n_heads());
  for (std::size_t h = 0; h < brme.n_heads(); ++h) out.push_back(brme.head_output(h, f));
  return out;
}

double nominal_reward(std::span<const GaussianReward> predictions) {
  if (predictions.empty()) throw std::invalid_argument("nominal_reward: empty prediction list");
  const GaussianReward* best = &predictions[0];
  for (const auto& p : predictions) {
    if (p.sigma < best->sigma || (p.sigma == best->sigma && p.head_id < best->head_id)) best = &p;
  }
  return best->mu;
}

McEstimate sigma_grad_expectation(const BrmeModel& brme, std::size_t head, std::size_t prompt, std::size_t response,
                                  PairSide side, double p_hat, double alpha, MseLossMode mode,
                                  std::size_t n_samples, std::uint64_t seed, Exec exec) {
  const GaussianReward out = brme.head_output(head, brme.features(prompt, response));
  return sigma_grad_expectation(out, side, p_hat, alpha, mode, n_samples, seed, exec);
}

// ----------------------------- partition -----------------------------

std::vector<std::size_t> HeadAssignment::members(std::size_t head) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < head_of.size(); ++i) {
    if (head_of[i] == head) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> HeadAssignment::counts() const {
  std::vector<std::size_t> c(n_heads, 0);
  for (std::size_t h : head_of) ++c[h];
  return c;
}

HeadAssignment partition_dataset(std::size_t n_examples, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0) throw std::invalid_argument("partition_dataset: need at least one head");
  if (n_examples < n_heads) {
    throw std::invalid_argument("partition_dataset: " + std::to_string(n_examples) + " examples cannot cover " +
                                std::to_string(n_heads) + " heads");
  }
  HeadAssignment a;
  a.n_heads = n_heads;
  a.head_of.resize(n_examples);
  for (auto& h : a.head_of) h = rng.below(n_heads);

  std::vector<std::size_t> counts = a.counts();
  for (std::size_t empty = 0; empty < n_heads; ++empty) {
    if (counts[empty] != 0) continue;
    const std::size_t donor =
        static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    for (std::size_t i = n_examples; i-- > 0;) {
      if (a.head_of[i] == donor) {
        a.head_of[i] = empty;
        --counts[donor];
        ++counts[empty];
        break;
      }
    }
  }
  return a;
}

// ----------------------------- stage 2 training -----------------------------

std::vector<double> mean_head_sigma(const BrmeModel& brme, const PreferenceDataset& dataset) {
  std::vector<double> sums(brme.n_heads(), 0.0);
  std::size_t n = 0;
  for (const auto& e : dataset.examples) {
    for (std::size_t resp : {e.chosen, e.rejected}) {
      for (const auto& g : brme_predict(brme, e.prompt, resp)) sums[g.head_id] += g.sigma;
      ++n;
    }
  }
  for (double& s : sums) s /= static_cast<double>(n);
  return sums;
}

namespace {

// Backpropagates a (d mu, d sigma) pair through one head and the trunk.
void backprop_head(const BrmeModel& brme, std::size_t head, const Tape& trunk_tape, const Tape& head_tape,
                   double d_mu, double d_sigma, double scale, std::span<double> trunk_grad,
                   std::span<double> head_grad) {
  const double raw = head_tape.pre.back()[1];
  const double out_grad[2] = {scale * d_mu, scale * d_sigma * sigmoid(raw)};
  std::vector<double> g_feat = brme.heads()[head].backward(head_tape, out_grad, head_grad);
  const auto& z = trunk_tape.pre.back();
  for (std::size_t i = 0; i < g_feat.size(); ++i) {
    if (brme.trunk().activation() == Activation::relu) {
      if (z[i] <= 0.0) g_feat[i] = 0.0;
    } else {
      const double t = std::tanh(z[i]);
      g_feat[i] *= 1.0 - t * t;
    }
  }
  brme.trunk().backward(trunk_tape, g_feat, trunk_grad);
}

}  // namespace

BrmeModel train_stage2(BrmeModel brme, const ScalarRewardModel& stage1, const PreferenceDataset& dataset,
                       const HeadAssignment& assignment, const Stage2Config& cfg, Rng& rng, Stage2Trace* trace) {
  if (assignment.head_of.size() != dataset.examples.size() || assignment.n_heads != brme.n_heads()) {
    throw std::invalid_argument("train_stage2: head assignment does not match dataset and model");
  }
  if (stage1.k() != brme.k()) throw std::invalid_argument("train_stage2: stage-1 model K mismatch");
  for (std::size_t c : assignment.counts()) {
    if (c == 0) throw std::invalid_argument("train_stage2: a head has no training examples");
  }

  const auto& ex = dataset.examples;
  std::vector<double> p_hat(ex.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    p_hat[i] = bt_prob(stage1.reward(ex[i].prompt, ex[i].chosen), stage1.reward(ex[i].prompt, ex[i].rejected));
    // A saturated stage-1 model can round p_hat to exactly 1.
    p_hat[i] = std::clamp(p_hat[i], 1e-12, 1.0 - 1e-12);
  }
  std::vector<std::vector<std::size_t>> members(brme.n_heads());
  for (std::size_t h = 0; h < brme.n_heads(); ++h) members[h] = assignment.members(h);

  AdamState trunk_opt(cfg.adam, brme.trunk().parameter_count());
  std::vector<AdamState> head_opt;
  for (const auto& h : brme.heads()) head_opt.emplace_back(cfg.adam, h.parameter_count());

  if (trace) {
    trace->head_loss.clear();
    trace->initial_mean_sigma = mean_head_sigma(brme, dataset);
    trace->min_sigma_seen = std::numeric_limits<double>::infinity();
  }

  Tape tp_trunk, tn_trunk, tp_head, tn_head;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<double> trunk_grad(brme.trunk().parameter_count(), 0.0);
    std::vector<std::vector<double>> head_grad;
    for (const auto& h : brme.heads()) head_grad.emplace_back(h.parameter_count(), 0.0);
    std::vector<double> losses(brme.n_heads(), 0.0);

    for (std::size_t h = 0; h < brme.n_heads(); ++h) {
      const double scale = 1.0 / static_cast<double>(members[h].size());
      for (std::size_t i : members[h]) {
        const auto& e = ex[i];
        const double eps_plus = rng.normal();
        const double eps_minus = rng.normal();
        const std::vector<double> fp = brme.features(e.prompt, e.chosen, &tp_trunk);
        const std::vector<double> fn = brme.features(e.prompt, e.rejected, &tn_trunk);
        const GaussianReward gp = brme.head_output(h, fp, &tp_head);
        const GaussianReward gn = brme.head_output(h, fn, &tn_head);
        if (trace) trace->min_sigma_seen = std::min({trace->min_sigma_seen, gp.sigma, gn.sigma});
        const MseHeadLoss l = mse_head_loss(gp, gn, p_hat[i], cfg.alpha, eps_plus, eps_minus, cfg.mode);
        losses[h] += scale * l.loss;
        backprop_head(brme, h, tp_trunk, tp_head, l.d_mu_plus, l.d_sigma_plus, scale, trunk_grad, head_grad[h]);
        backprop_head(brme, h, tn_trunk, tn_head, l.d_mu_minus, l.d_sigma_minus, scale, trunk_grad, head_grad[h]);
      }
      check_finite(losses[h], head_grad[h], "train_stage2", step);
    }
    check_finite(0.0, trunk_grad, "train_stage2", step);
    if (cfg.train_trunk) adam_step(brme.trunk(), trunk_grad, trunk_opt);
    for (std::size_t h = 0; h < brme.n_heads(); ++h) adam_step(brme.heads()[h], head_grad[h], head_opt[h]);
    if (trace) trace->head_loss.push_back(std::move(losses));
  }
  if (trace) trace->final_mean_sigma = mean_head_sigma(brme, dataset);
  return brme;
}

// ----------------------------- checkpoints -----------------------------

json to_json(const FeedForwardNet& net) {
  return json{{"layer_dims", net.layer_dims()},
              {"activation", to_string(net.activation())},
              {"params", std::vector<double>(net.params().begin(), net.params().end())}};
}

FeedForwardNet net_from_json(const json& j) {
  FeedForwardNet net(j.at("layer_dims").get<std::vector<std::size_t>>(),
                     activation_from_string(j.at("activation").get<std::string>()));
  net.set_params(j.at("params").get<std::vector<double>>());
  return net;
}

json checkpoint_json(const ScalarRewardModel& rm, std::uint64_t seed) {
  return json{{"type", "scalar_rm"}, {"k", rm.k()}, {"seed", seed}, {"net", to_json(rm.net())}};
}

ScalarRewardModel scalar_rm_from_json(const json& j) {
  if (j.at("type") != "scalar_rm") throw std::invalid_argument("checkpoint is not a scalar_rm");
  return ScalarRewardModel(j.at("k").get<std::size_t>(), net_from_json(j.at("net")));
}

json checkpoint_json(const BrmeModel& brme, MseLossMode mode, std::uint64_t seed) {
  json heads = json::array();
  for (const auto& h : brme.heads()) heads.push_back(to_json(h));
  return json{{"type", "brme"},
              {"k", brme.k()},
              {"n", brme.n_heads()},
              {"sigma_floor", brme.sigma_floor()},
              {"loss_mode", to_string(mode)},
              {"seed", seed},
              {"trunk", to_json(brme.trunk())},
              {"heads", heads}};
}

BrmeModel brme_from_json(const json& j) {
  if (j.at("type") != "brme") throw std::invalid_argument("checkpoint is not a brme model");
  std::vector<FeedForwardNet> heads;
  for (const auto& h : j.at("heads")) heads.push_back(net_from_json(h));
  if (heads.size() != j.at("n").get<std::size_t>()) throw std::invalid_argument("brme checkpoint: n mismatch");
  return BrmeModel(j.at("k").get<std::size_t>(), net_from_json(j.at("trunk")), std::move(heads),
                   j.at("sigma_floor").get<double>());
}

}  // namespace rrlab
