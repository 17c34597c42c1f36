#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace torusdyn {

// Pairwise (tree) summation: fixed evaluation order independent of thread
// count, so reductions are bit-reproducible.
double pairwise_sum(std::span<const double> values);
double pairwise_mean(std::span<const double> values);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  bool r_squared_defined = false;
  std::size_t n_points = 0;
};

// Ordinary least squares y ~ slope * x + intercept.
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// processed exactly once; callers write results into per-index slots.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Process-wide default worker count used by modules when none is given.
int default_threads();
void set_default_threads(int threads);

}  // namespace torusdyn
