#pragma once

// Data-parallel kernels. Every kernel has a serial reference path and an
// OpenMP path that produce bit-identical results: work is cut into fixed
// chunks, each chunk owns an Rng derived from (seed, chunk index), and
// partial results are combined in chunk order on one thread.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "rrlab/numerics.hpp"

namespace rrlab {

enum class Exec { serial, parallel };

// Thread count used by Exec::parallel; 0 means the OpenMP default.
void set_worker_threads(int n);
int worker_threads();

struct Moments {
  std::size_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    ++count;
    sum += x;
    sum_sq += x * x;
  }
  void merge(const Moments& o) {
    count += o.count;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  double mean() const { return sum / static_cast<double>(count); }
  // Unbiased (n - 1) sample variance.
  double variance() const;
  double std_error() const;
};

inline constexpr std::size_t kMonteCarloChunk = 1 << 14;

// Draws n_samples values from sample(rng) and returns their moments.
Moments monte_carlo_moments(std::size_t n_samples, std::uint64_t seed,
                            const std::function<double(Rng&)>& sample, Exec exec = Exec::parallel);

// Runs job(i) for i in [0, n). Jobs must not share mutable state.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& job, Exec exec = Exec::parallel);

}  // namespace rrlab
