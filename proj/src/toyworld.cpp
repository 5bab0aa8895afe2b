#include "rrlab/toyworld.hpp"

#include <cmath>
#include <stdexcept>

namespace rrlab {

ToyWorld make_world(std::size_t k, GoldenVariant variant) {
  if (k < 2) throw std::invalid_argument("make_world: K must be at least 2, got " + std::to_string(k));
  ToyWorld w;
  w.k = k;
  w.variant = variant;
  const double off = variant == GoldenVariant::zero_one ? 0.0 : -1.0;
  w.golden = Matrix(k, k, off);
  for (std::size_t i = 0; i < k; ++i) w.golden(i, i) = 1.0;
  return w;
}

PreferenceDataset annotate(const ToyWorld& world, Rng& rng) {
  PreferenceDataset ds;
  ds.k = world.k;
  ds.seed = rng.seed();
  ds.examples.reserve(2 * world.k);
  for (std::size_t x = 0; x < world.k; ++x) {
    // Draw from the K-1 non-matching responses, skipping over x.
    auto other = [&](std::size_t idx) { return idx < x ? idx : idx + 1; };
    const std::size_t first = rng.below(world.k - 1);
    std::size_t second = first;
    if (world.k > 2) {
      second = rng.below(world.k - 2);
      if (second >= first) ++second;
    }
    ds.examples.push_back({x, x, other(first)});
    ds.examples.push_back({x, x, other(second)});
  }
  return ds;
}

std::vector<double> one_hot(std::size_t k, std::size_t index) {
  if (index >= k) throw std::out_of_range("one_hot: index " + std::to_string(index) + " >= " + std::to_string(k));
  std::vector<double> v(k, 0.0);
  v[index] = 1.0;
  return v;
}

std::vector<double> encode_pair(std::size_t k, std::size_t prompt, std::size_t response) {
  if (prompt >= k || response >= k) throw std::out_of_range("encode_pair: index out of range");
  std::vector<double> v(2 * k, 0.0);
  v[prompt] = 1.0;
  v[k + response] = 1.0;
  return v;
}

double policy_accuracy(const Matrix& probs, const ToyWorld& world) {
  if (probs.rows() != world.k || probs.cols() != world.k) {
    throw DimensionError("policy_accuracy: policy matrix must be K x K");
  }
  std::size_t hits = 0;
  for (std::size_t x = 0; x < world.k; ++x) {
    if (argmax(probs.row(x)) == x) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(world.k);
}

Matrix rm_matrix(const RewardFn& reward_fn, const ToyWorld& world) {
  Matrix m(world.k, world.k);
  for (std::size_t x = 0; x < world.k; ++x) {
    for (std::size_t a = 0; a < world.k; ++a) {
      const double r = reward_fn(x, a);
      if (!std::isfinite(r)) {
        throw NumericError("rm_matrix: non-finite reward at (" + std::to_string(x) + ", " + std::to_string(a) + ")");
      }
      m(x, a) = r;
    }
  }
  return m;
}

double rm_ranking_accuracy(const RewardFn& reward_fn, const PreferenceDataset& dataset) {
  if (dataset.examples.empty()) throw std::invalid_argument("rm_ranking_accuracy: empty dataset");
  std::size_t hits = 0;
  for (const auto& e : dataset.examples) {
    if (reward_fn(e.prompt, e.chosen) > reward_fn(e.prompt, e.rejected)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.examples.size());
}

// ----------------------------- JSON -----------------------------

std::string to_string(GoldenVariant v) { return v == GoldenVariant::zero_one ? "zero_one" : "margin"; }

GoldenVariant golden_variant_from_string(const std::string& s) {
  if (s == "zero_one") return GoldenVariant::zero_one;
  if (s == "margin") return GoldenVariant::margin;
  throw std::invalid_argument("unknown golden variant '" + s + "' (expected zero_one or margin)");
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (double v : m.row(r)) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix: expected a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j.at(0).size();
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) throw std::invalid_argument("matrix: ragged rows");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Matrix(rows, cols, std::move(data));
}

json to_json(const ToyWorld& world) {
  return json{{"k", world.k}, {"variant", to_string(world.variant)}, {"golden", to_json(world.golden)}};
}

ToyWorld world_from_json(const json& j) {
  ToyWorld w = make_world(j.at("k").get<std::size_t>(),
                          golden_variant_from_string(j.value("variant", std::string("zero_one"))));
  if (j.contains("golden")) {
    Matrix g = matrix_from_json(j.at("golden"));
    if (g.rows() != w.k || g.cols() != w.k) throw std::invalid_argument("world: golden must be K x K");
    for (std::size_t x = 0; x < w.k; ++x) {
      if (argmax(g.row(x)) != x) throw std::invalid_argument("world: golden row argmax must be the diagonal");
    }
    w.golden = std::move(g);
  }
  return w;
}

json to_json(const PreferenceDataset& dataset) {
  json ex = json::array();
  for (const auto& e : dataset.examples) ex.push_back(json::array({e.prompt, e.chosen, e.rejected}));
  return json{{"k", dataset.k}, {"seed", dataset.seed}, {"generator", dataset.generator}, {"examples", ex}};
}

PreferenceDataset dataset_from_json(const json& j) {
  PreferenceDataset ds;
  ds.k = j.at("k").get<std::size_t>();
  ds.seed = j.value("seed", std::uint64_t{0});
  ds.generator = j.value("generator", std::string("ideal_annotator"));
  for (const auto& t : j.at("examples")) {
    PreferenceExample e{t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>(), t.at(2).get<std::size_t>()};
    if (e.chosen == e.rejected || e.prompt >= ds.k || e.chosen >= ds.k || e.rejected >= ds.k) {
      throw std::invalid_argument("dataset: invalid example");
    }
    ds.examples.push_back(e);
  }
  if (ds.examples.empty()) throw std::invalid_argument("dataset: no examples");
  return ds;
}

}  // namespace rrlab
