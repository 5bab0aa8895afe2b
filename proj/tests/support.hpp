#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "rrlab/tolerances.hpp"

namespace rrlab::testing {

struct FdReport {
  double worst_rel = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), tol::kFiniteDiffFloor});
}

// Central differences of f around x, compared entry-wise against grad.
//
// The difference quotient carries rounding error of order eps * |f| / h, so
// the relative-error denominator is never allowed below that noise divided by
// the pass threshold. An entry that fails at h is retried at h/10 and h/100
// and keeps its best error: a ReLU kink within h of a pre-activation is the
// usual cause, and a smaller step steps over it.
inline FdReport finite_difference(std::vector<double> x, const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> grad, double h = tol::kFiniteDiffStep) {
  constexpr double kNoiseUlps = 8.0;
  auto check = [&](std::size_t i, double step) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    const double fd = (up - down) / (2.0 * step);
    const double noise =
        kNoiseUlps * std::numeric_limits<double>::epsilon() * std::max(std::abs(up), std::abs(down)) / step;
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), tol::kFiniteDiffFloor, noise / tol::kFiniteDiffRel});
    return std::abs(fd - grad[i]) / denom;
  };
  FdReport r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double rel = check(i, h);
    for (double step = h / 10.0; rel >= tol::kFiniteDiffRel && step >= h / 100.0; step /= 10.0)
      rel = std::min(rel, check(i, step));
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_index = i;
    }
    ++r.checked;
  }
  return r;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("rrlab_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace rrlab::testing
