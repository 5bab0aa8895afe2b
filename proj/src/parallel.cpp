#include "rrlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rrlab {

namespace {
int g_threads = 0;
}

void set_worker_threads(int n) { g_threads = std::max(n, 0); }

int worker_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

double Moments::variance() const {
  if (count < 2) return 0.0;
  const double n = static_cast<double>(count);
  const double m = sum / n;
  return std::max(0.0, (sum_sq - n * m * m) / (n - 1.0));
}

double Moments::std_error() const { return std::sqrt(variance() / static_cast<double>(count)); }

Moments monte_carlo_moments(std::size_t n_samples, std::uint64_t seed, const std::function<double(Rng&)>& sample,
                            Exec exec) {
  const std::size_t n_chunks = (n_samples + kMonteCarloChunk - 1) / kMonteCarloChunk;
  std::vector<Moments> partial(n_chunks);
  auto run_chunk = [&](std::size_t c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    const std::size_t begin = c * kMonteCarloChunk;
    const std::size_t end = std::min(n_samples, begin + kMonteCarloChunk);
    Moments m;
    for (std::size_t i = begin; i < end; ++i) m.add(sample(rng));
    partial[c] = m;
  };
  for_each_index(n_chunks, run_chunk, exec);
  Moments total;
  for (const auto& m : partial) total.merge(m);
  return total;
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& job, Exec exec) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_threads())
  for (long long i = 0; i < count; ++i) {
    try {
      job(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rrlab
