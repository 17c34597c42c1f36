#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "torusdyn/numeric.hpp"
#include "torusdyn/tower_measures.hpp"

namespace torusdyn {

// Draws n points; deterministic in the seed.
using PointSampler = std::function<std::vector<TorusPoint>(std::size_t n, std::uint64_t seed)>;

PointSampler lebesgue_sampler(int dim);
PointSampler mu_a_sampler(const TowerMeasure& measure, int threads = 0);

// Observables with a declared Lipschitz constant (on the fundamental domain
// for the piecewise-linear ones). All read the first coordinate.
struct NamedObservable {
  std::string name;
  double lipschitz = 0.0;
  Observable fn;
};

// "cos_2pi_x", "sin_2pi_x", "centered_x" (x - 1/2), "tent" (distance to 0).
NamedObservable observable_from_name(const std::string& name);

struct LyapunovEstimate {
  std::vector<double> exponents;   // descending, nats per iterate of f
  std::vector<double> std_errors;
  int n_iterates = 0;
  std::size_t n_samples = 0;
  double log_det_average = 0.0;    // Birkhoff average of log |det Df|
  double log_det_std_error = 0.0;
};

// QR-reorthonormalized cocycle along each sampled orbit. Throws
// InvalidArgument unless n_iterates >= 100.
LyapunovEstimate lyapunov_exponents(const DynamicalMap& f, const PointSampler& sampler, int n_iterates,
                                    std::size_t n_samples, std::uint64_t seed, int threads = 0);

struct CorrelationCurve {
  std::string psi, phi;
  std::size_t n_samples = 0;
  std::vector<int> lags;               // 0..max_lag
  std::vector<double> correlations;
  std::vector<double> std_errors;      // batch bootstrap
  std::vector<int> fit_lags;           // 1, 2, ... while |C(k)| > 3 std error
  LinearFit fit;                       // log |C(k)| against k over fit_lags
  bool signal_below_noise = true;      // fewer than 4 usable lags
};

// C(k) = mean(psi . phi o f^k) - mean(psi) mean(phi) over common random orbits.
CorrelationCurve estimate_correlations(const DynamicalMap& f, const PointSampler& sampler, const NamedObservable& psi,
                                       const NamedObservable& phi, int max_lag, std::size_t n_samples,
                                       std::uint64_t seed, int threads = 0);
// Same, but throws SignalBelowNoise when fewer than 4 lags are usable.
// Requires max_lag >= 8.
CorrelationCurve correlation_decay(const DynamicalMap& f, const PointSampler& sampler, const NamedObservable& psi,
                                   const NamedObservable& phi, int max_lag, std::size_t n_samples, std::uint64_t seed,
                                   int threads = 0);

struct TailFit {
  std::vector<double> tails;   // nu_a(R >= n) for n = 1..n_max
  LinearFit fit;               // log tail against n over the positive tails
};

TailFit tail_decay_fit(const InducedMarkovMap& F, const BernoulliWeights& weights, int n_max);

}  // namespace torusdyn
