#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rrlab {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Rng
//
// xoshiro256** (Blackman & Vigna) seeded through splitmix64. Normal deviates
// use the Marsaglia polar method with a cached spare. The generator never
// touches <random> distributions, whose output differs between standard
// library implementations.
// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t& state);

// Independent sub-seed for a named stream of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  double normal();

  Rng fork(std::string_view stream) const { return Rng(derive_seed(seed_, stream)); }
  Rng fork(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Matrix: dense, row-major.
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

double sigmoid(double x);
// log(1 + e^x) without overflow.
double softplus(double x);
// log sigmoid(x) = -softplus(-x).
double log_sigmoid(double x);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

double l2_norm(std::span<const double> v);

// ---------------------------------------------------------------------------
// FeedForwardNet
//
// Dense network; the hidden activation is applied after every layer except
// the last, whose output is linear. Parameters live in one flat buffer laid
// out layer by layer as [weights (out x in, row-major), biases (out)], which
// is also the layout of every gradient buffer.
// ---------------------------------------------------------------------------

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

class FeedForwardNet;

struct Tape {
  const FeedForwardNet* owner = nullptr;
  std::uint64_t version = 0;
  // Input to each layer (index 0 is the network input).
  std::vector<std::vector<double>> inputs;
  // Pre-activation output of each layer.
  std::vector<std::vector<double>> pre;
};

class FeedForwardNet {
 public:
  FeedForwardNet() = default;
  // Zero-initialized network.
  FeedForwardNet(std::vector<std::size_t> layer_dims, Activation hidden);

  // He-style (relu) or Glorot-style (tanh) normal init with zero biases; the
  // last layer's weights are additionally multiplied by output_scale.
  static FeedForwardNet random(std::vector<std::size_t> layer_dims, Activation hidden, Rng& rng,
                               double output_scale = 1.0);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t num_layers() const { return dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  Activation activation() const { return act_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  // Mutable access bumps the version, invalidating outstanding tapes.
  std::span<double> mutable_params();
  void set_params(std::span<const double> p);

  double weight(std::size_t layer, std::size_t out, std::size_t in) const;
  double bias(std::size_t layer, std::size_t out) const;
  void set_weight(std::size_t layer, std::size_t out, std::size_t in, double v);
  void set_bias(std::size_t layer, std::size_t out, double v);

  std::vector<double> forward(std::span<const double> input, Tape* tape = nullptr) const;

  // Accumulates parameter gradients into grad (size parameter_count()) and
  // returns the gradient with respect to the network input.
  std::vector<double> backward(const Tape& tape, std::span<const double> output_grad,
                               std::span<double> grad) const;

  std::uint64_t version() const { return version_; }

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + dims_[layer + 1] * dims_[layer];
  }

  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  Activation act_ = Activation::relu;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled (AdamW-style) decay; 0 gives plain Adam.
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::size_t n) : config(cfg), first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// One bias-corrected Adam descent step. Throws NumericError on a non-finite
// gradient and DimensionError on a shape mismatch; params are untouched then.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

inline void adam_step(FeedForwardNet& net, std::span<const double> grads, AdamState& state) {
  adam_step(net.mutable_params(), grads, state);
}

}  // namespace rrlab
