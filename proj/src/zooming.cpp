#include "torusdyn/zooming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "torusdyn/numeric.hpp"
#include "torusdyn/random.hpp"

namespace torusdyn {

double ZoomingContraction::apply(int n, double r) const { return std::pow(rate, n) * r; }

double ZoomingContraction::series_sum(double r) const {
  if (rate >= 1.0) return std::numeric_limits<double>::infinity();
  return r * rate / (1.0 - rate);
}

namespace {

[[noreturn]] void axiom_violation(const std::string& axiom, const std::string& witness) {
  throw Error(ErrorCode::AxiomViolation, axiom + " fails at " + witness);
}

std::string triple(double r, int n, int m) {
  return "r=" + std::to_string(r) + ", n=" + std::to_string(n) + ", m=" + std::to_string(m);
}

}  // namespace

AxiomReport check_zooming_axioms(const ZoomingContraction& alpha, int grid) {
  if (!(alpha.rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "contraction rate must be positive");
  if (grid < 2) throw Error(ErrorCode::InvalidArgument, "axiom grid must be >= 2");
  AxiomReport report;
  report.strict_margin = report.monotone_margin = report.submult_margin = std::numeric_limits<double>::infinity();
  std::vector<double> rs;
  for (int i = 1; i <= grid; ++i) rs.push_back(static_cast<double>(i) / grid);
  const double ulp_slack = 4.0 * std::numeric_limits<double>::epsilon();
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double r = rs[i];
    for (int n = 1; n <= grid; ++n) {
      for (int m = 1; m <= grid; ++m) {
        ++report.samples;
        const double an = alpha.apply(n, r);
        if (!(an < r)) axiom_violation("strict contraction alpha_n(r) < r", triple(r, n, m));
        report.strict_margin = std::min(report.strict_margin, 1.0 - an / r);
        if (i + 1 < rs.size()) {
          const double next = alpha.apply(n, rs[i + 1]);
          if (!(an <= next)) axiom_violation("monotonicity", triple(r, n, m));
          report.monotone_margin = std::min(report.monotone_margin, next - an);
        }
        const double composed = alpha.apply(n, alpha.apply(m, r));
        const double joint = alpha.apply(n + m, r);
        if (composed > joint * (1.0 + ulp_slack)) axiom_violation("submultiplicativity", triple(r, n, m));
        report.submult_margin = std::min(report.submult_margin, (joint - composed) / joint);
      }
    }
    // Partial sums against the closed form.
    const double closed = alpha.series_sum(r);
    if (!std::isfinite(closed)) axiom_violation("summability", "r=" + std::to_string(r));
    std::vector<double> terms;
    for (int n = 1; n < 4000; ++n) {
      const double t = alpha.apply(n, r);
      terms.push_back(t);
      if (t < 1e-18 * closed) break;
    }
    const double partial = pairwise_sum(terms);
    report.series_partial_max_error = std::max(report.series_partial_max_error, std::abs(partial - closed) / closed);
    if (std::abs(partial - closed) > 1e-6 * closed) axiom_violation("summability", "r=" + std::to_string(r));
    report.series_sup = std::max(report.series_sup, closed);
  }
  return report;
}

// ---------------------------------------------------------------------------

std::vector<TorusPoint> pull_back_along(const DynamicalMap& f, const std::vector<TorusPoint>& chain, const TorusPoint& y) {
  std::vector<TorusPoint> zs(chain.size() + 1);
  zs.back() = y;
  for (std::size_t j = chain.size(); j-- > 0;) zs[j] = f.local_inverse(chain[j], zs[j + 1]);
  return zs;
}

namespace {

struct BranchCheck {
  bool ok = false;
  double derivative_bound = 0.0;
  double sampled_ratio = 0.0;
};

// The ell-step branch through `chain` fixing chain[0], on B_delta(chain[0]).
BranchCheck check_fixing_branch(const DynamicalMap& f, const std::vector<TorusPoint>& chain, double delta, int ell) {
  BranchCheck out;
  const TorusPoint& q = chain.front();
  std::vector<TorusPoint> ys{q}, zs;
  for (const auto& off : ball_sample_offsets(f.dimension(), delta)) ys.push_back(translate(q, off));
  try {
    for (const auto& y : ys) zs.push_back(pull_back_along(f, chain, y).front());
  } catch (const Error&) {
    return out;
  }
  for (const auto& z : zs) {
    if (torus_distance(z, q) >= 0.25) return out;
    const auto block = derivative_cocycle_scaled(f, z, ell);
    const double inverse_norm = block.log_scale == 0.0 ? 1.0 / conorm(block.mantissa) : std::exp(-block.log_conorm());
    out.derivative_bound = std::max(out.derivative_bound, inverse_norm);
  }
  for (std::size_t a = 0; a < ys.size(); ++a)
    for (std::size_t b = a + 1; b < ys.size(); ++b) {
      const double dy = torus_distance(ys[a], ys[b]);
      if (dy <= 0.0) continue;
      out.sampled_ratio = std::max(out.sampled_ratio, torus_distance(zs[a], zs[b]) / dy);
    }
  out.ok = out.derivative_bound <= 1.0 / 16.0 && out.sampled_ratio <= 1.0 / 16.0;
  return out;
}

}  // namespace

SourceZoomingData compute_source_zooming_data(const DynamicalMap& f, const PeriodicOrbit& source, double delta_search,
                                              int horizon) {
  if (source.classification != Classification::Source)
    throw Error(ErrorCode::NotASource, std::string("periodic orbit is classified ") + to_string(source.classification));
  if (!(delta_search > 0.0) || delta_search >= 0.5) throw Error(ErrorCode::InvalidArgument, "delta_search must lie in (0, 1/2)");
  SourceZoomingData data;
  data.source = source;
  data.gamma = source.period;
  data.horizon = horizon;
  data.lambda0 = std::log(16.0);
  data.lambda1 = std::log(8.0);
  data.orbit.push_back(source.point);
  for (int i = 1; i < data.gamma; ++i) data.orbit.push_back(f.evaluate(data.orbit.back()));
  data.representative = data.orbit.front();

  const double threshold = std::log(32.0);
  constexpr int kMaxBlocks = 400;
  std::vector<double> worst(kMaxBlocks + horizon + 1, std::numeric_limits<double>::infinity());
  for (int n = 1; n <= kMaxBlocks + horizon; ++n)
    for (const auto& q : data.orbit) worst[n] = std::min(worst[n], derivative_cocycle_scaled(f, q, n * data.gamma).log_conorm());
  for (int n = 1; n <= kMaxBlocks && data.n0 == 0; ++n) {
    bool all = true;
    for (int k = n; k <= n + horizon && all; ++k) all = worst[k] > threshold;
    if (all) data.n0 = n;
  }
  if (data.n0 == 0) throw Error(ErrorCode::NotASource, "the log 32 bound is never reached along the orbit");
  data.ell = data.n0 * data.gamma;
  data.min_block_log_conorm = worst[data.n0];

  std::vector<std::vector<TorusPoint>> chains;
  for (const auto& q : data.orbit) {
    std::vector<TorusPoint> chain{q};
    for (int j = 1; j < data.ell; ++j) chain.push_back(f.evaluate(chain.back()));
    chains.push_back(std::move(chain));
  }
  auto works = [&](double delta, BranchCheck* best) {
    BranchCheck combined{true, 0.0, 0.0};
    for (const auto& chain : chains) {
      auto c = check_fixing_branch(f, chain, delta, data.ell);
      if (!c.ok) return false;
      combined.derivative_bound = std::max(combined.derivative_bound, c.derivative_bound);
      combined.sampled_ratio = std::max(combined.sampled_ratio, c.sampled_ratio);
    }
    if (best) *best = combined;
    return true;
  };

  BranchCheck best;
  double lo = delta_search, hi = 0.0;
  while (!works(lo, &best)) {
    hi = lo;
    lo /= 2.0;
    if (lo < 1e-6) throw Error(ErrorCode::DeltaNotFound, "no admissible radius above 1e-6");
  }
  if (hi > 0.0) {
    for (int it = 0; it < 20; ++it) {
      const double mid = 0.5 * (lo + hi);
      BranchCheck c;
      if (works(mid, &c)) {
        lo = mid;
        best = c;
      } else {
        hi = mid;
      }
    }
  }
  data.delta = lo;
  data.branch_contraction = best.derivative_bound;
  data.sampled_ratio = best.sampled_ratio;
  return data;
}

// ---------------------------------------------------------------------------

namespace {

Vec random_direction(Rng& rng, int n) {
  if (n == 1) {
    Vec v(1);
    v[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return v;
  }
  Vec v(n);
  do {
    for (int i = 0; i < n; ++i) {
      const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
      v[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

Vec random_in_ball(Rng& rng, int n, double r) {
  while (true) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = (2.0 * rng.uniform() - 1.0) * r;
    if (v.norm() <= r) return v;
  }
}

}  // namespace

ZoomingVerdict is_zooming_time_along(const DynamicalMap& f, const std::vector<TorusPoint>& chain, const TorusPoint& center,
                                     const ZoomingContraction& alpha, double delta) {
  const int n = static_cast<int>(chain.size());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "zooming time must be >= 1");
  if (!(delta > 0.0) || delta >= 0.5) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1/2)");
  const int dim = f.dimension();

  // 32 n deterministic pairs: center-to-boundary rays, diameters, interior
  // pairs and close pairs probing the local derivative.
  Rng rng(derive_seed(0x7a6f6f6dULL, static_cast<std::uint64_t>(n)));
  std::vector<std::pair<Vec, Vec>> pairs;
  const int count = 32 * n;
  for (int k = 0; k < count; ++k) {
    const Vec u = random_direction(rng, dim);
    switch (k % 4) {
      case 0: pairs.emplace_back(Vec::Zero(dim), u * delta); break;
      case 1: pairs.emplace_back(u * delta, -u * delta); break;
      case 2: pairs.emplace_back(random_in_ball(rng, dim, delta), random_in_ball(rng, dim, delta)); break;
      default: {
        const Vec a = random_in_ball(rng, dim, delta * (1.0 - 1e-3));
        pairs.emplace_back(a, a + u * (delta * 1e-3));
      }
    }
  }

  ZoomingVerdict verdict;
  std::vector<std::vector<TorusPoint>> trail_a, trail_b;
  try {
    const auto center_trail = pull_back_along(f, chain, center);
    if (torus_distance(center_trail.front(), chain.front()) > 1e-9) {
      verdict.refusal = ErrorCode::BranchUndefined;
      verdict.reason = "branch does not return the orbit point";
      return verdict;
    }
    for (const auto& [a, b] : pairs) {
      trail_a.push_back(pull_back_along(f, chain, translate(center, a)));
      trail_b.push_back(pull_back_along(f, chain, translate(center, b)));
    }
  } catch (const Error& e) {
    verdict.refusal = ErrorCode::BranchUndefined;
    verdict.reason = e.what();
    return verdict;
  }

  ZoomingCertificate cert;
  cert.point = chain.front();
  cert.time = n;
  cert.delta = delta;
  cert.chain = chain;
  cert.pairs = pairs.size();
  cert.contraction_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    for (int j = 0; j < n; ++j) {
      if (torus_distance(trail_a[k][j], chain[j]) >= 0.25) {
        verdict.refusal = ErrorCode::BranchUndefined;
        verdict.reason = "pulled-back ball leaves the injectivity radius at step " + std::to_string(j);
        return verdict;
      }
    }
    const double dn = torus_distance(trail_a[k][n], trail_b[k][n]);
    for (int j = 0; j < n; ++j) {
      const double dj = torus_distance(trail_a[k][j], trail_b[k][j]);
      const double bound = alpha.apply(n - j, dn);
      if (dj > bound + kSampleTol) {
        verdict.refusal = ErrorCode::ContractionFailed;
        verdict.reason = "contraction inequality fails at step " + std::to_string(j);
        verdict.witness = ZoomingWitness{trail_a[k][n], trail_b[k][n], j, dj, bound};
        return verdict;
      }
      if (bound > 0.0) cert.contraction_margin = std::min(cert.contraction_margin, 1.0 - dj / bound);
    }
    cert.preball_diameter = std::max(cert.preball_diameter, torus_distance(trail_a[k][0], trail_b[k][0]));
  }
  verdict.certificate = std::move(cert);
  return verdict;
}

ZoomingVerdict is_zooming_time(const DynamicalMap& f, const TorusPoint& x, int n, const ZoomingContraction& alpha,
                               double delta) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "zooming time must be >= 1");
  std::vector<TorusPoint> chain{x};
  for (int j = 1; j < n; ++j) chain.push_back(f.evaluate(chain.back()));
  return is_zooming_time_along(f, chain, f.evaluate(chain.back()), alpha, delta);
}

ZoomingFrequency zooming_frequency(const DynamicalMap& f, const TorusPoint& x, const ZoomingContraction& alpha,
                                   double delta, int n_max, int threads) {
  if (n_max < 1) throw Error(ErrorCode::InvalidArgument, "n_max must be >= 1");
  std::vector<TorusPoint> orbit{x};
  for (int j = 0; j < n_max; ++j) orbit.push_back(f.evaluate(orbit.back()));
  std::vector<char> zooming(n_max, 0);
  parallel_for(static_cast<std::size_t>(n_max), threads > 0 ? threads : default_threads(), [&](std::size_t i) {
    const int n = static_cast<int>(i) + 1;
    std::vector<TorusPoint> chain(orbit.begin(), orbit.begin() + n);
    zooming[i] = is_zooming_time_along(f, chain, orbit[n], alpha, delta).is_zooming() ? 1 : 0;
  });
  ZoomingFrequency out;
  int hits = 0;
  for (int i = 0; i < n_max; ++i) {
    if (zooming[i]) {
      ++hits;
      out.zooming_times.push_back(i + 1);
    }
    out.running.push_back(static_cast<double>(hits) / (i + 1));
  }
  out.frequency = out.running.back();
  return out;
}

}  // namespace torusdyn
