#include "rrlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rrlab {

// ----------------------------- Rng -----------------------------

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base ^ (0xD1B54A32D192ED03ULL * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
  // FNV-1a
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return derive_seed(base, h);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  const std::uint64_t bound = n;
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

// ----------------------------- Matrix -----------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

// ----------------------------- scalar helpers -----------------------------

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double log_sigmoid(double x) { return -softplus(-x); }

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ----------------------------- FeedForwardNet -----------------------------

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "' (expected relu or tanh)");
}

FeedForwardNet::FeedForwardNet(std::vector<std::size_t> layer_dims, Activation hidden)
    : dims_(std::move(layer_dims)), act_(hidden) {
  if (dims_.size() < 2) throw DimensionError("FeedForwardNet: need at least input and output dims");
  for (std::size_t d : dims_) {
    if (d == 0) throw DimensionError("FeedForwardNet: layer dims must be positive");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(total);
    total += dims_[l + 1] * dims_[l] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

FeedForwardNet FeedForwardNet::random(std::vector<std::size_t> layer_dims, Activation hidden, Rng& rng,
                                      double output_scale) {
  FeedForwardNet net(std::move(layer_dims), hidden);
  const double gain = hidden == Activation::relu ? std::sqrt(2.0) : 1.0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const std::size_t in = net.dims_[l];
    const std::size_t out = net.dims_[l + 1];
    double scale = gain / std::sqrt(static_cast<double>(in));
    if (l + 1 == net.num_layers()) scale = output_scale / std::sqrt(static_cast<double>(in));
    double* w = net.params_.data() + net.weight_offset(l);
    for (std::size_t i = 0; i < out * in; ++i) w[i] = scale * rng.normal();
  }
  return net;
}

std::span<double> FeedForwardNet::mutable_params() {
  ++version_;
  return params_;
}

void FeedForwardNet::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) {
    throw DimensionError("set_params: expected " + std::to_string(params_.size()) + " values, got " +
                         std::to_string(p.size()));
  }
  std::copy(p.begin(), p.end(), params_.begin());
  ++version_;
}

double FeedForwardNet::weight(std::size_t layer, std::size_t out, std::size_t in) const {
  return params_[weight_offset(layer) + out * dims_[layer] + in];
}

double FeedForwardNet::bias(std::size_t layer, std::size_t out) const {
  return params_[bias_offset(layer) + out];
}

void FeedForwardNet::set_weight(std::size_t layer, std::size_t out, std::size_t in, double v) {
  params_[weight_offset(layer) + out * dims_[layer] + in] = v;
  ++version_;
}

void FeedForwardNet::set_bias(std::size_t layer, std::size_t out, double v) {
  params_[bias_offset(layer) + out] = v;
  ++version_;
}

std::vector<double> FeedForwardNet::forward(std::span<const double> input, Tape* tape) const {
  if (input.size() != input_dim()) {
    throw DimensionError("forward: input length " + std::to_string(input.size()) + " != " +
                         std::to_string(input_dim()));
  }
  if (tape) {
    tape->owner = this;
    tape->version = version_;
    tape->inputs.assign(num_layers(), {});
    tape->pre.assign(num_layers(), {});
  }
  std::vector<double> h(input.begin(), input.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * h[i];
      z[o] = acc;
    }
    if (tape) {
      tape->inputs[l] = h;
      tape->pre[l] = z;
    }
    if (l + 1 < num_layers()) {
      for (double& v : z) v = act_ == Activation::relu ? std::max(v, 0.0) : std::tanh(v);
    }
    h = std::move(z);
  }
  return h;
}

std::vector<double> FeedForwardNet::backward(const Tape& tape, std::span<const double> output_grad,
                                             std::span<double> grad) const {
  if (tape.owner != this || tape.version != version_ || tape.inputs.size() != num_layers()) {
    throw std::logic_error("backward: tape is stale or was recorded on a different network");
  }
  if (output_grad.size() != output_dim()) {
    throw DimensionError("backward: output_grad length " + std::to_string(output_grad.size()) +
                         " != " + std::to_string(output_dim()));
  }
  if (grad.size() != params_.size()) {
    throw DimensionError("backward: gradient buffer has " + std::to_string(grad.size()) +
                         " entries, network has " + std::to_string(params_.size()));
  }
  std::vector<double> g(output_grad.begin(), output_grad.end());
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    if (l + 1 < num_layers()) {
      const auto& z = tape.pre[l];
      for (std::size_t o = 0; o < out; ++o) {
        if (act_ == Activation::relu) {
          if (z[o] <= 0.0) g[o] = 0.0;
        } else {
          const double t = std::tanh(z[o]);
          g[o] *= 1.0 - t * t;
        }
      }
    }
    const auto& x = tape.inputs[l];
    const double* w = params_.data() + weight_offset(l);
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    std::vector<double> gin(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double go = g[o];
      gb[o] += go;
      if (go == 0.0) continue;
      const double* wr = w + o * in;
      double* gwr = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gwr[i] += go * x[i];
        gin[i] += wr[i] * go;
      }
    }
    g = std::move(gin);
  }
  return g;
}

// ----------------------------- Adam -----------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment sizes disagree");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient entry");
  }
  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    if (c.weight_decay != 0.0) params[i] -= c.learning_rate * c.weight_decay * params[i];
    params[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

}  // namespace rrlab
