#include "torusdyn/ergodic_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "torusdyn/errors.hpp"
#include "torusdyn/random.hpp"

namespace torusdyn {

PointSampler lebesgue_sampler(int dim) {
  if (dim < 1 || dim > kMaxDim) throw Error(ErrorCode::InvalidArgument, "dimension out of range");
  return [dim](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TorusPoint> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec v(dim);
      for (int k = 0; k < dim; ++k) v(k) = rng.uniform();
      pts.emplace_back(v);
    }
    return pts;
  };
}

PointSampler mu_a_sampler(const TowerMeasure& measure, int threads) {
  return [measure, threads](std::size_t n, std::uint64_t seed) { return sample_mu_a(measure, n, seed, threads).points; };
}

NamedObservable observable_from_name(const std::string& name) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (name == "cos_2pi_x") return {name, two_pi, [](const TorusPoint& x) { return std::cos(two_pi * x[0]); }};
  if (name == "sin_2pi_x") return {name, two_pi, [](const TorusPoint& x) { return std::sin(two_pi * x[0]); }};
  if (name == "centered_x") return {name, 1.0, [](const TorusPoint& x) { return x[0] - 0.5; }};
  if (name == "tent") return {name, 1.0, [](const TorusPoint& x) { return std::min(x[0], 1.0 - x[0]); }};
  throw Error(ErrorCode::InvalidArgument, "unknown observable '" + name + "'");
}

namespace {

double std_error_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

LyapunovEstimate lyapunov_exponents(const DynamicalMap& f, const PointSampler& sampler, int n_iterates,
                                    std::size_t n_samples, std::uint64_t seed, int threads) {
  if (n_iterates < 100) throw Error(ErrorCode::InvalidArgument, "n_iterates must be >= 100");
  if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
  const int n = f.dimension();
  const auto starts = sampler(n_samples, seed);
  std::vector<std::vector<double>> per_sample(n_samples, std::vector<double>(static_cast<std::size_t>(n)));
  std::vector<double> log_det(n_samples);
  parallel_for(n_samples, threads > 0 ? threads : default_threads(), [&](std::size_t s) {
    TorusPoint x = starts[s];
    Mat q = Mat::Identity(n, n);
    std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
    double det_sum = 0.0;
    for (int t = 0; t < n_iterates; ++t) {
      const Mat jac = f.derivative(x);
      det_sum += std::log(std::abs(jac.determinant()));
      if (n == 1) {
        sums[0] += std::log(std::abs(jac(0, 0)));
      } else {
        Eigen::HouseholderQR<Mat> qr{Mat(jac * q)};
        const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
        Mat qm = qr.householderQ();
        for (int i = 0; i < n; ++i) {
          sums[static_cast<std::size_t>(i)] += std::log(std::abs(r(i, i)));
          if (r(i, i) < 0.0) qm.col(i) *= -1.0;
        }
        q = qm;
      }
      x = f.evaluate(x);
    }
    for (int i = 0; i < n; ++i) per_sample[s][static_cast<std::size_t>(i)] = sums[static_cast<std::size_t>(i)] / n_iterates;
    std::sort(per_sample[s].begin(), per_sample[s].end(), std::greater<>());
    log_det[s] = det_sum / n_iterates;
  });
  LyapunovEstimate est;
  est.n_iterates = n_iterates;
  est.n_samples = n_samples;
  for (int i = 0; i < n; ++i) {
    std::vector<double> col(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) col[s] = per_sample[s][static_cast<std::size_t>(i)];
    const double mean = pairwise_mean(col);
    est.exponents.push_back(mean);
    est.std_errors.push_back(std_error_of(col, mean));
  }
  est.log_det_average = pairwise_mean(log_det);
  est.log_det_std_error = std_error_of(log_det, est.log_det_average);
  return est;
}

CorrelationCurve estimate_correlations(const DynamicalMap& f, const PointSampler& sampler, const NamedObservable& psi,
                                       const NamedObservable& phi, int max_lag, std::size_t n_samples,
                                       std::uint64_t seed, int threads) {
  if (max_lag < 1) throw Error(ErrorCode::InvalidArgument, "max_lag must be >= 1");
  if (n_samples < 128) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 128");
  const auto starts = sampler(n_samples, seed);
  const std::size_t L = static_cast<std::size_t>(max_lag) + 1;
  // Per-sample psi(x) and phi(f^k x); orbits are independent.
  std::vector<double> psi_v(n_samples), phi_v(n_samples * L);
  parallel_for(n_samples, threads > 0 ? threads : default_threads(), [&](std::size_t s) {
    TorusPoint x = starts[s];
    psi_v[s] = psi.fn(x);
    for (std::size_t k = 0; k < L; ++k) {
      phi_v[s * L + k] = phi.fn(x);
      x = f.evaluate(x);
    }
  });

  // Batch sums: psi, phi, psi * phi o f^k.
  constexpr std::size_t B = 64;
  std::vector<double> s_psi(B), s_phi(B), count(B);
  std::vector<std::vector<double>> s_cross(L, std::vector<double>(B));
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t lo = b * n_samples / B, hi = (b + 1) * n_samples / B;
    std::vector<double> a(psi_v.begin() + static_cast<std::ptrdiff_t>(lo), psi_v.begin() + static_cast<std::ptrdiff_t>(hi));
    s_psi[b] = pairwise_sum(a);
    std::vector<double> p0(hi - lo);
    for (std::size_t s = lo; s < hi; ++s) p0[s - lo] = phi_v[s * L];
    s_phi[b] = pairwise_sum(p0);
    count[b] = static_cast<double>(hi - lo);
    for (std::size_t k = 0; k < L; ++k) {
      std::vector<double> c(hi - lo);
      for (std::size_t s = lo; s < hi; ++s) c[s - lo] = psi_v[s] * phi_v[s * L + k];
      s_cross[k][b] = pairwise_sum(c);
    }
  }
  auto pooled = [&](const std::vector<std::size_t>& picks, std::size_t k) {
    std::vector<double> sp(picks.size()), sf(picks.size()), sc(picks.size()), cn(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
      sp[i] = s_psi[picks[i]];
      sf[i] = s_phi[picks[i]];
      sc[i] = s_cross[k][picks[i]];
      cn[i] = count[picks[i]];
    }
    const double N = pairwise_sum(cn);
    return pairwise_sum(sc) / N - (pairwise_sum(sp) / N) * (pairwise_sum(sf) / N);
  };

  CorrelationCurve curve;
  curve.psi = psi.name;
  curve.phi = phi.name;
  curve.n_samples = n_samples;
  std::vector<std::size_t> all(B);
  for (std::size_t b = 0; b < B; ++b) all[b] = b;
  constexpr int kResamples = 400;
  Rng rng(derive_seed(seed, 0xc0dec0ULL));
  std::vector<std::vector<std::size_t>> resamples(kResamples, std::vector<std::size_t>(B));
  for (auto& r : resamples) {
    for (auto& b : r) b = rng.below(B);
  }
  for (std::size_t k = 0; k < L; ++k) {
    curve.lags.push_back(static_cast<int>(k));
    curve.correlations.push_back(pooled(all, k));
    std::vector<double> boot(kResamples);
    for (int i = 0; i < kResamples; ++i) boot[static_cast<std::size_t>(i)] = pooled(resamples[static_cast<std::size_t>(i)], k);
    const double mu = pairwise_mean(boot);
    std::vector<double> sq(kResamples);
    for (int i = 0; i < kResamples; ++i) sq[static_cast<std::size_t>(i)] = (boot[static_cast<std::size_t>(i)] - mu) * (boot[static_cast<std::size_t>(i)] - mu);
    curve.std_errors.push_back(std::sqrt(pairwise_sum(sq) / (kResamples - 1)));
  }
  std::vector<double> xs, ys;
  for (std::size_t k = 1; k < L; ++k) {
    if (!(std::abs(curve.correlations[k]) > 3.0 * curve.std_errors[k])) break;
    curve.fit_lags.push_back(static_cast<int>(k));
    xs.push_back(static_cast<double>(k));
    ys.push_back(std::log(std::abs(curve.correlations[k])));
  }
  curve.signal_below_noise = curve.fit_lags.size() < 4;
  if (xs.size() >= 2) curve.fit = least_squares(xs, ys);
  return curve;
}

CorrelationCurve correlation_decay(const DynamicalMap& f, const PointSampler& sampler, const NamedObservable& psi,
                                   const NamedObservable& phi, int max_lag, std::size_t n_samples, std::uint64_t seed,
                                   int threads) {
  if (max_lag < 8) throw Error(ErrorCode::InvalidArgument, "max_lag must be >= 8");
  auto curve = estimate_correlations(f, sampler, psi, phi, max_lag, n_samples, seed, threads);
  if (curve.signal_below_noise) {
    throw Error(ErrorCode::SignalBelowNoise,
                "only " + std::to_string(curve.fit_lags.size()) + " lags exceed 3 standard errors",
                static_cast<long long>(curve.fit_lags.size()));
  }
  return curve;
}

TailFit tail_decay_fit(const InducedMarkovMap& F, const BernoulliWeights& weights, int n_max) {
  if (n_max < 1) throw Error(ErrorCode::InvalidArgument, "n_max must be >= 1");
  TailFit out;
  std::vector<double> xs, ys;
  for (int n = 1; n <= n_max; ++n) {
    const double t = return_time_tail(F, weights.a, n);
    out.tails.push_back(t);
    if (t > 0.0) {
      xs.push_back(n);
      ys.push_back(std::log(t));
    }
  }
  if (xs.size() >= 2) {
    out.fit = least_squares(xs, ys);
  } else {
    out.fit.n_points = xs.size();
    out.fit.r_squared_defined = false;
  }
  return out;
}

}  // namespace torusdyn
