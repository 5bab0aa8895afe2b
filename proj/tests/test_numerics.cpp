#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "rrlab/numerics.hpp"
#include "rrlab/tolerances.hpp"
#include "support.hpp"

using namespace rrlab;

namespace {

// Straight-line recomputation of a dense net through the public accessors.
std::vector<double> reference_forward(const FeedForwardNet& net, std::vector<double> x) {
  const auto& dims = net.layer_dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::vector<double> y(dims[l + 1]);
    for (std::size_t o = 0; o < dims[l + 1]; ++o) {
      double acc = net.bias(l, o);
      for (std::size_t i = 0; i < dims[l]; ++i) acc += net.weight(l, o, i) * x[i];
      const bool hidden = l + 2 < dims.size();
      if (hidden) acc = net.activation() == Activation::relu ? std::max(acc, 0.0) : std::tanh(acc);
      y[o] = acc;
    }
    x = std::move(y);
  }
  return x;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("rng is reproducible and streams are independent") {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> xa, xb, xc;
  for (int i = 0; i < 100; ++i) {
    xa.push_back(a.next_u64());
    xb.push_back(b.next_u64());
    xc.push_back(c.next_u64());
  }
  CHECK(xa == xb);
  CHECK(xa != xc);
  CHECK(derive_seed(7, "data") != derive_seed(7, "rm"));
  CHECK(derive_seed(7, "data") == derive_seed(7, "data"));
  CHECK(Rng(7).fork("x").next_u64() == Rng(derive_seed(7, "x")).next_u64());
}

TEST_CASE("rng uniform and below stay in range") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7);
  }
  CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}

TEST_CASE("rng normal has unit moments") {
  Rng rng(3);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("matrix shape is enforced") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0, 2.0, 3.0}), DimensionError);
  const Matrix id = Matrix::identity(3);
  CHECK(id(1, 1) == 1.0);
  CHECK(id(1, 2) == 0.0);
  CHECK(id.all_finite());
  Matrix bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("softmax examples") {
  const auto u = softmax(std::vector<double>{0, 0, 0, 0});
  for (double p : u) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  const auto p = softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
  CHECK(std::abs(p[0] - 0.25) < 1e-15);
  CHECK(std::abs(p[1] - 0.75) < 1e-15);

  const std::vector<double> logits{0.3, -1.2, 2.5};
  std::vector<double> shifted = logits;
  for (auto& v : shifted) v += 17.0;
  const auto a = softmax(logits), b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-15);

  CHECK_THROWS(softmax(std::vector<double>{}));
}

TEST_CASE("softmax is a distribution for any finite input") {
  Rng rng(11);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> logits(1 + rng.below(20));
    for (auto& v : logits) v = (rng.uniform() - 0.5) * 2000.0;
    const auto p = softmax(logits);
    double sum = 0.0;
    for (double x : p) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < tol::kSoftmaxSum);
    const auto lp = log_softmax(logits);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] > 1e-300) CHECK(std::abs(std::exp(lp[i]) - p[i]) < 1e-12);
    }
  }
}

TEST_CASE("sigmoid examples") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::abs(sigmoid(std::log(3.0)) - 0.75) < 1e-15);
  const double low = sigmoid(-1000.0);
  CHECK(low >= 0.0);
  CHECK_FALSE(std::isnan(low));
  CHECK(sigmoid(1000.0) == 1.0);
  for (double x : {-30.0, -2.0, -0.1, 0.7, 5.0}) CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-15);
  CHECK(std::abs(log_sigmoid(-800.0) + 800.0) < 1e-9);
  CHECK(std::abs(softplus(800.0) - 800.0) < 1e-9);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax(std::vector<double>{1, 3, 3, 2}) == 1);
  CHECK(argmax(std::vector<double>{0, 0, 0}) == 0);
}

TEST_CASE("forward on a zero-weight net returns the output biases") {
  FeedForwardNet net({4, 3, 2}, Activation::relu);
  net.set_bias(1, 0, 0.5);
  net.set_bias(1, 1, -2.0);
  const auto y = net.forward(std::vector<double>{1, 2, 3, 4});
  CHECK(y == std::vector<double>{0.5, -2.0});
}

TEST_CASE("forward through an identity layer") {
  FeedForwardNet net({5, 5}, Activation::relu);
  for (std::size_t i = 0; i < 5; ++i) net.set_weight(0, i, i, 1.0);
  const std::vector<double> e3{0, 0, 0, 1, 0};
  CHECK(net.forward(e3) == e3);
}

TEST_CASE("forward matches a straight-line recomputation") {
  Rng rng(5);
  for (auto act : {Activation::relu, Activation::tanh}) {
    for (int t = 0; t < 20; ++t) {
      auto net = FeedForwardNet::random({6, 9, 7, 3}, act, rng);
      const auto x = random_vector(rng, 6);
      const auto y = net.forward(x);
      const auto ref = reference_forward(net, x);
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < tol::kRecompute);
    }
  }
  FeedForwardNet net({3, 2}, Activation::relu);
  CHECK_THROWS_AS(net.forward(std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("backward of a linear net gives the input as weight gradient") {
  Rng rng(9);
  auto net = FeedForwardNet::random({4, 1}, Activation::relu, rng);
  const std::vector<double> x{0.5, -1.0, 2.0, 3.0};
  Tape tape;
  net.forward(x, &tape);
  std::vector<double> grad(net.parameter_count(), 0.0);
  net.backward(tape, std::vector<double>{1.0}, grad);
  for (std::size_t j = 0; j < 4; ++j) CHECK(grad[j] == x[j]);
  CHECK(grad[4] == 1.0);
}

TEST_CASE("backward with zero output gradient is zero") {
  Rng rng(10);
  auto net = FeedForwardNet::random({4, 8, 3}, Activation::tanh, rng);
  Tape tape;
  net.forward(random_vector(rng, 4), &tape);
  std::vector<double> grad(net.parameter_count(), 0.0);
  net.backward(tape, std::vector<double>(3, 0.0), grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("backward rejects stale and foreign tapes") {
  Rng rng(12);
  auto net = FeedForwardNet::random({2, 3, 1}, Activation::relu, rng);
  auto other = net;
  Tape tape;
  net.forward(std::vector<double>{1, 2}, &tape);
  std::vector<double> grad(net.parameter_count(), 0.0);
  CHECK_THROWS(other.backward(tape, std::vector<double>{1.0}, grad));
  net.mutable_params()[0] += 1.0;
  CHECK_THROWS(net.backward(tape, std::vector<double>{1.0}, grad));
}

TEST_CASE("backward matches central differences on repo network shapes") {
  struct Shape {
    std::vector<std::size_t> dims;
    Activation act;
  };
  // Reward net, BRME trunk and head, linear and deep policy, critic.
  const std::vector<Shape> shapes{{{16, 16, 16, 1}, Activation::relu}, {{16, 32, 32}, Activation::relu},
                                  {{32, 16, 2}, Activation::relu},     {{8, 8}, Activation::relu},
                                  {{8, 32, 32, 8}, Activation::tanh},  {{8, 32, 32, 1}, Activation::relu}};
  Rng rng(2024);
  for (const auto& shape : shapes) {
    for (int probe = 0; probe < 100; ++probe) {
      auto net = FeedForwardNet::random(shape.dims, shape.act, rng);
      const auto x = random_vector(rng, net.input_dim());
      const auto w = random_vector(rng, net.output_dim());
      auto loss = [&](std::span<const double> p) {
        FeedForwardNet n = net;
        n.set_params(p);
        const auto y = n.forward(x);
        return std::inner_product(y.begin(), y.end(), w.begin(), 0.0);
      };
      Tape tape;
      net.forward(x, &tape);
      std::vector<double> grad(net.parameter_count(), 0.0);
      net.backward(tape, w, grad);
      const auto r = testing::finite_difference({net.params().begin(), net.params().end()}, loss, grad);
      CHECK_MESSAGE(r.worst_rel < tol::kFiniteDiffRel, "param " << r.worst_index);
    }
  }
}

TEST_CASE("adam first step has the closed form") {
  AdamConfig cfg{.learning_rate = 0.01};
  AdamState st(cfg, 3);
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 1e-3};
  adam_step(p, g, st);
  CHECK(st.step_count == 1);
  const std::vector<double> start{1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    // m_hat = g, v_hat = g^2 after bias correction.
    const double expected = start[i] - cfg.learning_rate * g[i] / (std::abs(g[i]) + cfg.epsilon);
    CHECK(std::abs(p[i] - expected) < 1e-15);
  }
}

TEST_CASE("adam leaves parameters alone on zero gradient and descends on constant gradient") {
  AdamState st(AdamConfig{.learning_rate = 0.05}, 2);
  std::vector<double> p{1.0, 1.0};
  adam_step(p, std::vector<double>{0.0, 0.0}, st);
  CHECK(p == std::vector<double>{1.0, 1.0});
  for (int i = 0; i < 50; ++i) adam_step(p, std::vector<double>{2.0, -0.5}, st);
  CHECK(p[0] < 1.0);
  CHECK(p[1] > 1.0);
  CHECK(st.step_count == 51);
}

TEST_CASE("adam rejects bad input without touching parameters") {
  AdamState st(AdamConfig{}, 2);
  std::vector<double> p{1.0, 2.0};
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{0.1, std::numeric_limits<double>::infinity()}, st), NumericError);
  CHECK(p == std::vector<double>{1.0, 2.0});
  CHECK(st.step_count == 0);
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{0.1}, st), DimensionError);
}

TEST_CASE("training trajectories are bit-identical for equal seeds") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    auto net = FeedForwardNet::random({4, 8, 1}, Activation::relu, rng);
    AdamState st(AdamConfig{.learning_rate = 0.01}, net.parameter_count());
    for (int step = 0; step < 30; ++step) {
      const auto x = random_vector(rng, 4);
      Tape tape;
      const auto y = net.forward(x, &tape);
      std::vector<double> grad(net.parameter_count(), 0.0);
      net.backward(tape, std::vector<double>{2.0 * y[0]}, grad);
      adam_step(net, grad, st);
    }
    return std::vector<double>(net.params().begin(), net.params().end());
  };
  CHECK(run(77) == run(77));
  CHECK(run(77) != run(78));
}

TEST_CASE("activation names round-trip") {
  CHECK(activation_from_string(to_string(Activation::tanh)) == Activation::tanh);
  CHECK(activation_from_string("relu") == Activation::relu);
  CHECK_THROWS(activation_from_string("gelu"));
}
