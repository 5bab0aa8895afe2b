#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rrlab/numerics.hpp"

namespace rrlab {

using json = nlohmann::json;

// zero_one: golden(x,a) = [x == a]. margin: +1 on the diagonal, -1 elsewhere.
enum class GoldenVariant { zero_one, margin };

struct ToyWorld {
  std::size_t k = 0;
  GoldenVariant variant = GoldenVariant::zero_one;
  Matrix golden;

  double golden_reward(std::size_t prompt, std::size_t response) const { return golden(prompt, response); }
};

ToyWorld make_world(std::size_t k, GoldenVariant variant = GoldenVariant::zero_one);

struct PreferenceExample {
  std::size_t prompt = 0;
  std::size_t chosen = 0;
  std::size_t rejected = 0;

  friend bool operator==(const PreferenceExample&, const PreferenceExample&) = default;
};

struct PreferenceDataset {
  std::vector<PreferenceExample> examples;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string generator = "ideal_annotator";

  std::size_t size() const { return examples.size(); }
};

// Ideal annotator: for every prompt x, prefers x over two distinct responses
// drawn uniformly without replacement from the other K-1 (with K = 2 the
// single other response is used twice). Returns 2K examples ordered by prompt.
PreferenceDataset annotate(const ToyWorld& world, Rng& rng);

// Reward models see a (prompt, response) pair as one-hot(prompt) ++ one-hot(response).
std::vector<double> encode_pair(std::size_t k, std::size_t prompt, std::size_t response);
std::vector<double> one_hot(std::size_t k, std::size_t index);

using RewardFn = std::function<double(std::size_t prompt, std::size_t response)>;

// Fraction of prompt rows whose argmax (lowest index on ties) is the matching
// response. probs must be K x K with row x holding pi(.|x).
double policy_accuracy(const Matrix& probs, const ToyWorld& world);

// K x K grid of reward_fn values; throws NumericError on a non-finite entry.
Matrix rm_matrix(const RewardFn& reward_fn, const ToyWorld& world);

// Fraction of examples ranked strictly correctly; a tie counts as a miss.
double rm_ranking_accuracy(const RewardFn& reward_fn, const PreferenceDataset& dataset);

json to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);
json to_json(const ToyWorld& world);
ToyWorld world_from_json(const json& j);
json to_json(const PreferenceDataset& dataset);
PreferenceDataset dataset_from_json(const json& j);

std::string to_string(GoldenVariant v);
GoldenVariant golden_variant_from_string(const std::string& s);

}  // namespace rrlab
