#include "torusdyn/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace torusdyn {

namespace {

double pairwise_range(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_range(v, half) + pairwise_range(v + half, n - half);
}

std::atomic<int> g_default_threads{1};

}  // namespace

double pairwise_sum(std::span<const double> values) { return pairwise_range(values.data(), values.size()); }

double pairwise_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return pairwise_sum(values) / static_cast<double>(values.size());
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  LinearFit fit;
  fit.n_points = x.size();
  if (x.size() < 2 || x.size() != y.size()) return fit;
  const double mx = pairwise_mean(x), my = pairwise_mean(y);
  std::vector<double> sxx(x.size()), sxy(x.size()), syy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx[i] = (x[i] - mx) * (x[i] - mx);
    sxy[i] = (x[i] - mx) * (y[i] - my);
    syy[i] = (y[i] - my) * (y[i] - my);
  }
  const double Sxx = pairwise_sum(sxx), Sxy = pairwise_sum(sxy), Syy = pairwise_sum(syy);
  if (Sxx <= 0.0) return fit;
  fit.slope = Sxy / Sxx;
  fit.intercept = my - fit.slope * mx;
  if (Syy > 0.0) {
    fit.r_squared = (Sxy * Sxy) / (Sxx * Syy);
    fit.r_squared_defined = true;
  }
  return fit;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(std::min<std::size_t>(n, 1024))));
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // Contiguous ownership: worker w handles [w*n/W, (w+1)*n/W).
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int default_threads() { return g_default_threads.load(); }
void set_default_threads(int threads) { g_default_threads.store(std::max(1, threads)); }

}  // namespace torusdyn
