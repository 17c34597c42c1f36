#include "torusdyn/orbit_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/multiprecision/cpp_int.hpp>

#include "torusdyn/errors.hpp"
#include "torusdyn/numeric.hpp"
#include "torusdyn/random.hpp"

namespace torusdyn {

namespace {

int resolve_threads(int threads) { return threads > 0 ? threads : default_threads(); }

// Calls fn on every point of the resolution^n grid {i / resolution}.
template <class Fn>
void for_each_grid_index(int n, long resolution, Fn&& fn) {
  std::array<long, kMaxDim> idx{};
  while (true) {
    fn(idx);
    int axis = 0;
    while (axis < n && ++idx[axis] == resolution) idx[axis++] = 0;
    if (axis == n) break;
  }
}

std::vector<TorusPoint> grid_points(int n, long resolution) {
  std::vector<TorusPoint> pts;
  for_each_grid_index(n, resolution, [&](const std::array<long, kMaxDim>& idx) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = static_cast<double>(idx[i]) / static_cast<double>(resolution);
    pts.emplace_back(v);
  });
  return pts;
}

bool lex_less(const TorusPoint& a, const TorusPoint& b) {
  for (int i = 0; i < a.dim(); ++i)
    if (a[i] != b[i]) return a[i] < b[i];
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// forward orbits

namespace {

ForwardDensity orbit_density(const std::vector<TorusPoint>& orbit, double eps) {
  const int n_max = static_cast<int>(orbit.size()) - 1;
  auto dense_prefix = [&](int n) { return is_epsilon_dense(std::span<const TorusPoint>(orbit.data(), static_cast<std::size_t>(n) + 1), eps); };
  ForwardDensity out;
  if (!dense_prefix(n_max)) return out;
  int lo = -1, hi = n_max;  // prefix lo fails (or empty), prefix hi succeeds
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    if (dense_prefix(mid)) hi = mid;
    else lo = mid;
  }
  out.dense = true;
  out.first_n = hi;
  return out;
}

void check_orbit_args(int n_max, double eps) {
  if (n_max < 0) throw Error(ErrorCode::InvalidArgument, "n_max must be non-negative");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
}

}  // namespace

ForwardDensity forward_orbit_density(const DynamicalMap& f, const TorusPoint& x, int n_max, double eps) {
  check_orbit_args(n_max, eps);
  std::vector<TorusPoint> orbit{x};
  orbit.reserve(static_cast<std::size_t>(n_max) + 1);
  for (int i = 0; i < n_max; ++i) orbit.push_back(f.evaluate(orbit.back()));
  return orbit_density(orbit, eps);
}

std::vector<TorusPoint> exact_linear_orbit(const IntMat& linear, const std::vector<std::string>& decimal_coords, int n_max) {
  using boost::multiprecision::cpp_int;
  const int n = static_cast<int>(linear.rows());
  if (static_cast<int>(decimal_coords.size()) != n) throw Error(ErrorCode::InvalidArgument, "coordinate count does not match the dimension");
  // Parse each coordinate as an exact decimal a / 10^digits.
  std::size_t digits = 0;
  std::vector<std::pair<std::string, std::string>> parts;
  for (const auto& s : decimal_coords) {
    std::string t = s;
    bool negative = false;
    if (!t.empty() && (t[0] == '-' || t[0] == '+')) {
      negative = t[0] == '-';
      t = t.substr(1);
    }
    const auto dot = t.find('.');
    std::string whole = dot == std::string::npos ? t : t.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : t.substr(dot + 1);
    if (whole.empty()) whole = "0";
    if ((whole + frac).find_first_not_of("0123456789") != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "bad decimal coordinate '" + s + "'");
    digits = std::max(digits, frac.size());
    parts.emplace_back((negative ? "-" : "") + whole, frac);
  }
  cpp_int modulus = 1;
  for (std::size_t i = 0; i < digits; ++i) modulus *= 10;
  auto reduce = [&](cpp_int v) {
    v %= modulus;
    if (v < 0) v += modulus;
    return v;
  };
  std::vector<cpp_int> num(n);
  for (int i = 0; i < n; ++i) {
    std::string frac = parts[i].second;
    frac.resize(digits, '0');
    const bool negative = parts[i].first[0] == '-';
    std::string text = std::string(negative ? parts[i].first.substr(1) : parts[i].first) + frac;
    // A leading zero would make the string parse as octal.
    text.erase(0, std::min(text.find_first_not_of('0'), text.size() - 1));
    cpp_int v(text);
    num[i] = reduce(negative ? cpp_int(-v) : v);
  }
  auto to_point = [&](const std::vector<cpp_int>& v) {
    Vec c(n);
    for (int i = 0; i < n; ++i) {
      // Keep 60 leading digits for the conversion to double.
      cpp_int scaled = v[i], scale = modulus;
      while (scale > cpp_int(1) << 62) {
        scaled /= 2;
        scale /= 2;
      }
      c[i] = static_cast<double>(scaled) / static_cast<double>(scale);
    }
    return TorusPoint(c);
  };
  std::vector<TorusPoint> orbit{to_point(num)};
  for (int step = 0; step < n_max; ++step) {
    std::vector<cpp_int> next(n);
    for (int i = 0; i < n; ++i) {
      cpp_int acc = 0;
      for (int j = 0; j < n; ++j) acc += cpp_int(linear(i, j)) * num[j];
      next[i] = reduce(acc);
    }
    num = std::move(next);
    orbit.push_back(to_point(num));
  }
  return orbit;
}

ForwardDensity forward_orbit_density_exact(const DynamicalMap& f, const std::vector<std::string>& decimal_coords, int n_max,
                                           double eps) {
  check_orbit_args(n_max, eps);
  if (!f.is_linear()) throw Error(ErrorCode::InvalidArgument, "exact orbits need a map without perturbation");
  return orbit_density(exact_linear_orbit(f.linear_part(), decimal_coords, n_max), eps);
}

// ---------------------------------------------------------------------------
// pre-orbits

namespace {

std::vector<TorusPoint> expand_level(const DynamicalMap& f, const std::vector<TorusPoint>& level, int threads) {
  std::vector<std::vector<TorusPoint>> slots(level.size());
  parallel_for(level.size(), resolve_threads(threads), [&](std::size_t i) { slots[i] = f.inverse_branch_points(level[i]); });
  std::vector<TorusPoint> next;
  next.reserve(level.size() * static_cast<std::size_t>(f.degree()));
  for (auto& s : slots) next.insert(next.end(), s.begin(), s.end());
  return next;
}

}  // namespace

PreOrbitTree build_preorbit_tree(const DynamicalMap& f, const TorusPoint& x, int depth_max, std::size_t node_budget,
                                 int threads) {
  if (depth_max < 1) throw Error(ErrorCode::InvalidArgument, "depth must be >= 1");
  const double degree = static_cast<double>(f.degree());
  int feasible = 0;
  double level = 1.0;
  while (feasible < depth_max && level * degree <= static_cast<double>(node_budget)) {
    level *= degree;
    ++feasible;
  }
  if (feasible < depth_max)
    throw Error(ErrorCode::BudgetExceeded,
                "degree^depth exceeds node budget; largest feasible depth is " + std::to_string(feasible), feasible);
  PreOrbitTree tree;
  tree.root = x;
  tree.depth = depth_max;
  tree.levels.push_back({x});
  for (int d = 1; d <= depth_max; ++d) tree.levels.push_back(expand_level(f, tree.levels.back(), threads));
  return tree;
}

PreOrbitCertificate preorbit_density_certificate(const DynamicalMap& f, const TorusPoint& x, double eps, int depth_max,
                                                 std::size_t node_budget, int threads) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
  if (depth_max < 0) throw Error(ErrorCode::InvalidArgument, "depth must be non-negative");
  PreOrbitCertificate cert;
  cert.eps = eps;
  cert.prune_cell = eps / 4.0;
  const int n = f.dimension();
  PointIndex all(n, cert.prune_cell);
  all.insert(x);
  std::vector<TorusPoint> frontier{x};
  cert.frontier_sizes.push_back(1);
  if (is_epsilon_dense(all.points(), eps)) {
    cert.dense = true;
    cert.union_size = all.size();
    return cert;
  }
  const auto degree = static_cast<std::size_t>(f.degree());
  for (int depth = 1; depth <= depth_max; ++depth) {
    if (cert.nodes_expanded + frontier.size() * degree > node_budget)
      throw Error(ErrorCode::Inconclusive, "node budget exhausted at depth " + std::to_string(depth - 1), depth - 1);
    cert.nodes_expanded += frontier.size() * degree;
    const auto children = expand_level(f, frontier, threads);
    // One representative per cell, first in branch order wins.
    PointIndex level(n, cert.prune_cell);
    std::vector<TorusPoint> next;
    for (const auto& c : children)
      if (level.insert_if_cell_empty(c)) {
        next.push_back(c);
        all.insert_if_cell_empty(c);
      }
    frontier = std::move(next);
    cert.frontier_sizes.push_back(frontier.size());
    cert.depth_used = depth;
    if (is_epsilon_dense(all.points(), eps)) {
      cert.dense = true;
      break;
    }
  }
  cert.union_size = all.size();
  return cert;
}

// ---------------------------------------------------------------------------
// periodic points

const char* to_string(Classification c) {
  switch (c) {
    case Classification::Source: return "source";
    case Classification::Sink: return "sink";
    case Classification::Saddle: return "saddle";
    case Classification::Nonhyperbolic: return "nonhyperbolic";
  }
  return "unknown";
}

Classification classify(const std::vector<double>& moduli, double margin) {
  bool above = false, below = false;
  for (double m : moduli) {
    if (std::abs(m - 1.0) <= margin) return Classification::Nonhyperbolic;
    if (m > 1.0) above = true;
    else below = true;
  }
  if (above && below) return Classification::Saddle;
  return above ? Classification::Source : Classification::Sink;
}

PeriodicOrbit make_periodic_orbit(const DynamicalMap& f, const TorusPoint& x, int k) {
  PeriodicOrbit orbit;
  orbit.point = x;
  orbit.period = k;
  orbit.multiplier = derivative_cocycle(f, x, k);
  orbit.moduli = eigenvalue_moduli(orbit.multiplier);
  orbit.classification = classify(orbit.moduli);
  orbit.complex_pair = has_complex_pair(orbit.multiplier, 1e-9);
  orbit.residual = torus_distance(iterate(f, x, k), x);
  return orbit;
}

namespace {

std::optional<TorusPoint> periodic_newton(const DynamicalMap& f, const TorusPoint& seed, int k) {
  const int n = f.dimension();
  const Mat eye = Mat::Identity(n, n);
  TorusPoint x = seed;
  Vec g = displacement(x, iterate(f, x, k));
  double norm = g.norm();
  for (int it = 0; it < kMaxNewtonIters && norm >= 1e-13; ++it) {
    const Mat jac = derivative_cocycle(f, x, k) - eye;
    const Vec step = jac.partialPivLu().solve(g);
    if (!step.allFinite()) return std::nullopt;
    double lambda = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      const TorusPoint trial = translate(x, -lambda * step);
      const Vec gt = displacement(trial, iterate(f, trial, k));
      if (gt.norm() < norm) {
        x = trial;
        g = gt;
        norm = gt.norm();
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) break;
  }
  if (norm < 0.1 * kPeriodicTol) return x;
  return std::nullopt;
}

}  // namespace

PeriodicSearch find_periodic_points(const DynamicalMap& f, int k, int seed_grid_resolution, int threads) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "period must be >= 1");
  if (seed_grid_resolution < 1) throw Error(ErrorCode::InvalidArgument, "seed grid resolution must be >= 1");
  const int n = f.dimension();
  const auto seeds = grid_points(n, seed_grid_resolution);
  std::vector<std::optional<TorusPoint>> found(seeds.size());
  parallel_for(seeds.size(), resolve_threads(threads), [&](std::size_t i) { found[i] = periodic_newton(f, seeds[i], k); });

  PeriodicSearch out;
  out.seeds = seeds.size();
  PointIndex index(n, 1e-3);
  std::vector<TorusPoint> unique;
  for (const auto& p : found) {
    if (!p) {
      ++out.dropped;
      continue;
    }
    if (index.nearest_within(*p, 1e-7)) continue;
    index.insert(*p);
    unique.push_back(*p);
  }
  std::sort(unique.begin(), unique.end(), lex_less);
  for (const auto& p : unique) {
    auto orbit = make_periodic_orbit(f, p, k);
    // Independent re-iteration; anything that does not close up is dropped.
    if (orbit.residual < 1e-9) out.orbits.push_back(std::move(orbit));
    else ++out.dropped;
  }
  return out;
}

// ---------------------------------------------------------------------------
// hypotheses

ExpansionReport verify_expanding_off_U0(const DynamicalMap& f, const std::optional<Ball>& u0, int grid_resolution,
                                        double margin, int threads) {
  if (grid_resolution < 1) throw Error(ErrorCode::InvalidArgument, "grid resolution must be >= 1");
  const auto pts = grid_points(f.dimension(), grid_resolution);
  std::vector<double> values(pts.size(), std::numeric_limits<double>::infinity());
  parallel_for(pts.size(), resolve_threads(threads), [&](std::size_t i) {
    if (u0 && u0->contains(pts[i])) return;
    values[i] = conorm(f.derivative(pts[i]));
  });
  ExpansionReport report;
  report.min_conorm = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (std::isinf(values[i])) continue;
    ++report.points_checked;
    if (values[i] < report.min_conorm) {
      report.min_conorm = values[i];
      report.argmin = pts[i];
    }
  }
  report.expanding = report.points_checked > 0 && report.min_conorm > 1.0 + margin;
  return report;
}


IrgReport verify_irg(const DynamicalMap& f, const TorusPoint& x, int n_steps, double eps, double r_target,
                     const std::optional<Ball>& u0) {
  if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 1");
  if (!(eps > 0.0) || !(r_target > 0.0) || r_target >= 0.5) throw Error(ErrorCode::InvalidArgument, "need eps > 0 and 0 < R < 1/2");
  std::vector<TorusPoint> orbit{x};
  for (int i = 0; i < n_steps; ++i) orbit.push_back(f.evaluate(orbit.back()));
  if (u0)
    for (std::size_t i = 0; i < orbit.size(); ++i)
      if (u0->contains(orbit[i])) throw Error(ErrorCode::OrbitEntersU0, "orbit enters U0 at step " + std::to_string(i), static_cast<long long>(i));

  const auto sample = ball_sample_offsets(f.dimension(), r_target);
  IrgReport report;
  report.eps = eps;
  report.r_target = r_target;
  report.samples = sample.size();
  for (int big_n = 1; big_n <= n_steps; ++big_n) {
    double worst = 0.0;
    bool ok = true;
    for (const auto& off : sample) {
      TorusPoint z = translate(orbit[big_n], off);
      try {
        for (int j = big_n - 1; j >= 0; --j) z = f.local_inverse(orbit[j], z);
      } catch (const Error&) {
        ok = false;
        break;
      }
      const double d = torus_distance(z, x);
      worst = std::max(worst, d / eps);
      if (!(d < eps)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      report.holds = true;
      report.n = big_n;
      report.worst_ratio = worst;
      return report;
    }
  }
  return report;
}

ArcEscapeReport sample_arc_escape(const DynamicalMap& f, const Ball& u0, const Ball& u1, double delta0, int n_arcs,
                                  int points_per_arc, int horizon, std::uint64_t seed) {
  if (!(delta0 > 0.0) || delta0 >= 0.5 || n_arcs < 1 || points_per_arc < 2 || horizon < 1)
    throw Error(ErrorCode::InvalidArgument, "bad arc-escape parameters");
  const int n = f.dimension();
  ArcEscapeReport report;
  report.horizon = horizon;
  report.min_escaping_points = points_per_arc;
  Rng rng(seed);
  int attempts = 0;
  while (report.arcs_tested < n_arcs) {
    if (++attempts > 1000 * n_arcs) throw Error(ErrorCode::InvalidArgument, "could not place arcs outside U0");
    Vec start(n), dir(n);
    for (int i = 0; i < n; ++i) {
      start[i] = rng.uniform();
      dir[i] = rng.uniform() - 0.5;
    }
    if (dir.norm() < 1e-3) continue;
    const double length = delta0 * (1.0 + 0.5 * rng.uniform());
    dir *= length / dir.norm();
    std::vector<TorusPoint> pts;
    bool inside_u0 = false;
    for (int i = 0; i < points_per_arc && !inside_u0; ++i) {
      pts.emplace_back(Vec(start + dir * (static_cast<double>(i) / (points_per_arc - 1))));
      inside_u0 = u0.contains(pts.back());
    }
    if (inside_u0) continue;
    int escaping = 0;
    for (const auto& y : pts) {
      TorusPoint z = y;
      bool stays = true;
      for (int k = 1; k <= horizon && stays; ++k) {
        z = f.evaluate(z);
        stays = !u1.contains(z);
      }
      if (stays) ++escaping;
    }
    ++report.arcs_tested;
    report.min_escaping_points = std::min(report.min_escaping_points, escaping);
    if (escaping == 0) report.falsified = true;
  }
  return report;
}

PreimageReport verify_preimage_outside(const DynamicalMap& f, const Ball& u1, int grid_resolution, int threads) {
  const auto pts = grid_points(f.dimension(), grid_resolution);
  std::vector<char> status(pts.size(), 0);  // 0 skipped, 1 ok, 2 failed
  parallel_for(pts.size(), resolve_threads(threads), [&](std::size_t i) {
    if (u1.contains(pts[i])) return;
    const auto pre = f.inverse_branch_points(pts[i]);
    status[i] = std::any_of(pre.begin(), pre.end(), [&](const TorusPoint& w) { return !u1.contains(w); }) ? 1 : 2;
  });
  PreimageReport report;
  for (char s : status) {
    if (s == 0) continue;
    ++report.points_checked;
    if (s == 2) ++report.failures;
  }
  report.holds = report.points_checked > 0 && report.failures == 0;
  return report;
}

}  // namespace torusdyn
