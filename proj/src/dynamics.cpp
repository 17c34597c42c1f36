#include "torusdyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "torusdyn/errors.hpp"

namespace torusdyn {

long long DynamicalMap::degree() const { return std::llabs(integer_determinant(linear_part())); }

// ---------------------------------------------------------------------------
// PerturbedLinearMap

PerturbedLinearMap::PerturbedLinearMap(IntMat linear) : linear_(std::move(linear)) {
  const int n = static_cast<int>(linear_.rows());
  if (n < 1 || n > kMaxDim || linear_.cols() != n) throw Error(ErrorCode::InvalidArgument, "linear part must be square of size 1..4");
  const long long det = integer_determinant(linear_);
  if (det == 0) throw Error(ErrorCode::InvalidArgument, "linear part is singular");
  const long long N = std::llabs(det);
  if (std::pow(static_cast<double>(N), n) > 2e7) throw Error(ErrorCode::InvalidArgument, "degree too large for branch enumeration");
  linear_real_ = to_real(linear_);
  linear_inverse_ = linear_real_.inverse();

  // L^{-1} k mod 1 lies in (1/N) Z^n and depends only on k mod N.
  const IntMat adj = integer_adjugate(linear_);
  const long long sign = det > 0 ? 1 : -1;
  std::set<std::vector<long long>> seen;
  std::vector<long long> k(n, 0);
  while (true) {
    std::vector<long long> num(n);
    for (int i = 0; i < n; ++i) {
      long long v = 0;
      for (int j = 0; j < n; ++j) v += adj(i, j) * k[j];
      v *= sign;
      num[i] = ((v % N) + N) % N;
    }
    seen.insert(num);
    int axis = 0;
    while (axis < n && ++k[axis] == N) k[axis++] = 0;
    if (axis == n) break;
  }
  for (const auto& num : seen) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = static_cast<double>(num[i]) / static_cast<double>(N);
    kernel_.push_back(v);
  }
}

TorusPoint PerturbedLinearMap::evaluate(const TorusPoint& x) const {
  Vec lift = linear_real_ * x.coords();
  if (has_perturbation()) lift += perturbation(x);
  return TorusPoint(lift);
}

Mat PerturbedLinearMap::derivative(const TorusPoint& x) const {
  if (!has_perturbation()) return linear_real_;
  return linear_real_ + perturbation_jacobian(x);
}

std::optional<Vec> PerturbedLinearMap::newton(const Vec& seed, const Vec& y, double s) const {
  auto residual = [&](const Vec& w) {
    Vec image = linear_real_ * w;
    if (s != 0.0) image += s * perturbation(TorusPoint(w));
    return wrap_difference(image - y);
  };
  Vec w = seed;
  Vec r = residual(w);
  double norm = r.norm();
  for (int it = 0; it < kMaxNewtonIters; ++it) {
    if (norm < kNewtonTol) return w;
    const Mat jac = linear_real_ + s * perturbation_jacobian(TorusPoint(w));
    const Vec step = jac.partialPivLu().solve(r);
    double lambda = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      const Vec trial = w - lambda * step;
      const Vec rt = residual(trial);
      const double nt = rt.norm();
      if (nt < norm) {
        w = trial;
        r = rt;
        norm = nt;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) break;
  }
  if (norm < kNewtonTol) return w;
  return std::nullopt;
}

std::optional<std::vector<Vec>> PerturbedLinearMap::solve_branches(const TorusPoint& y, int homotopy_steps) const {
  const Vec base = linear_inverse_ * y.coords();
  std::vector<Vec> sols;
  sols.reserve(kernel_.size());
  for (const auto& kappa : kernel_) sols.push_back(base + kappa);
  if (homotopy_steps <= 0) {
    for (auto& w : sols) {
      auto solved = newton(w, y.coords(), 1.0);
      if (!solved) return std::nullopt;
      w = *solved;
    }
    return sols;
  }
  for (int step = 1; step <= homotopy_steps; ++step) {
    const double s = static_cast<double>(step) / homotopy_steps;
    for (auto& w : sols) {
      auto solved = newton(w, y.coords(), s);
      if (!solved) return std::nullopt;
      w = *solved;
    }
  }
  return sols;
}

namespace {

bool has_collision(const std::vector<TorusPoint>& pts) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (torus_distance(pts[i], pts[j]) < 10.0 * kBranchTol) return true;
  return false;
}

}  // namespace

std::vector<TorusPoint> PerturbedLinearMap::inverse_branch_points(const TorusPoint& y) const {
  if (!has_perturbation()) {
    const Vec base = linear_inverse_ * y.coords();
    std::vector<TorusPoint> out;
    out.reserve(kernel_.size());
    for (const auto& kappa : kernel_) out.emplace_back(Vec(base + kappa));
    return out;
  }
  bool diverged = false;
  for (int steps : {0, 8, 32, 128}) {
    auto sols = solve_branches(y, steps);
    if (!sols) {
      diverged = true;
      continue;
    }
    std::vector<TorusPoint> out;
    out.reserve(sols->size());
    for (const auto& w : *sols) out.emplace_back(w);
    if (has_collision(out)) {
      diverged = false;
      continue;
    }
    return out;
  }
  if (diverged) throw Error(ErrorCode::NewtonDivergence, "inverse branch Newton iteration failed to converge");
  throw Error(ErrorCode::BranchCollision, "two inverse branches converged to the same point");
}

TorusPoint PerturbedLinearMap::local_inverse(const TorusPoint& w_ref, const TorusPoint& y) const {
  if (!has_perturbation()) {
    const Vec d = wrap_difference(y.coords() - linear_real_ * w_ref.coords());
    return TorusPoint(Vec(w_ref.coords() + linear_inverse_ * d));
  }
  const Vec y_ref = linear_real_ * w_ref.coords() + perturbation(w_ref);
  const Vec d = wrap_difference(y.coords() - y_ref);
  // Path lifting: follow the segment in short pieces so Newton stays on the branch.
  for (int refine = 0; refine < 4; ++refine) {
    const int steps = std::max(1, static_cast<int>(std::ceil(d.norm() / 0.05))) << (2 * refine);
    Vec w = w_ref.coords();
    Vec y_cur = y_ref;
    bool ok = true;
    for (int i = 1; i <= steps; ++i) {
      const Vec y_next = y_ref + d * (static_cast<double>(i) / steps);
      const Mat jac = derivative(TorusPoint(w));
      const Vec seed = w + jac.partialPivLu().solve(Vec(y_next - y_cur));
      auto solved = newton(seed, y_next, 1.0);
      if (!solved) {
        ok = false;
        break;
      }
      w = *solved;
      y_cur = y_next;
    }
    if (ok) return TorusPoint(w);
  }
  throw Error(ErrorCode::NewtonDivergence, "local inverse branch could not be continued");
}

// ---------------------------------------------------------------------------
// linear maps

LinearMap::LinearMap(IntMat matrix) : PerturbedLinearMap(std::move(matrix)) {}

nlohmann::json LinearMap::descriptor() const { return {{"family", "linear"}, {"matrix", to_json(linear_part())}}; }

LinearExpandingMap::LinearExpandingMap(IntMat matrix) : LinearMap(std::move(matrix)) {
  const auto moduli = eigenvalue_moduli(to_real(linear_part()));
  if (moduli.back() <= 1.0) throw Error(ErrorCode::InvalidArgument, "linear expanding map needs all eigenvalue moduli > 1");
  if (degree() < 2) throw Error(ErrorCode::InvalidArgument, "linear expanding map needs |det E| >= 2");
}

nlohmann::json LinearExpandingMap::descriptor() const {
  return {{"family", "linear_expanding"}, {"matrix", to_json(linear_part())}};
}

// ---------------------------------------------------------------------------
// bump profile

double bump_profile(double s) {
  if (s >= 1.0) return 0.0;
  const double a = 1.0 - s * s;
  return a * a * a;
}

double bump_profile_derivative(double s) {
  if (s >= 1.0) return 0.0;
  const double a = 1.0 - s * s;
  return -6.0 * s * a * a;
}

// grad_u rho(|u| / radius) = -6 (1 - s^2)^2 u / radius^2, smooth through u = 0.
static Vec bump_gradient(const Vec& u, double radius) {
  const double s = u.norm() / radius;
  if (s >= 1.0) return Vec::Zero(u.size());
  const double a = 1.0 - s * s;
  return (-6.0 * a * a / (radius * radius)) * u;
}

// ---------------------------------------------------------------------------
// doubling family

static IntMat scalar_matrix(long long m) {
  IntMat a(1, 1);
  a(0, 0) = m;
  return a;
}

DoublingFamilyMap::DoublingFamilyMap(int multiplier, std::optional<Bump> bump)
    : PerturbedLinearMap(scalar_matrix(multiplier)), multiplier_(multiplier), bump_(bump) {
  if (multiplier < 2) throw Error(ErrorCode::InvalidArgument, "doubling family multiplier must be >= 2");
  if (bump_) {
    if (!(bump_->radius > 0.0) || !(bump_->radius < 0.5)) throw Error(ErrorCode::InvalidArgument, "bump radius must lie in (0, 1/2)");
    // d/du [rho(|u|/R) u] ranges over [-32/49, 1].
    const double worst = multiplier + std::min(bump_->strength, -bump_->strength * 32.0 / 49.0);
    if (!(worst > 0.0)) throw Error(ErrorCode::InvalidArgument, "bump strength creates a critical point");
  }
}

nlohmann::json DoublingFamilyMap::descriptor() const {
  nlohmann::json j{{"family", "doubling"}, {"multiplier", multiplier_}};
  if (bump_) j["bump"] = {{"site", bump_->site}, {"radius", bump_->radius}, {"strength", bump_->strength}};
  return j;
}

Vec DoublingFamilyMap::perturbation(const TorusPoint& x) const {
  Vec out = Vec::Zero(1);
  if (!has_perturbation()) return out;
  const double u = displacement(TorusPoint{bump_->site}, x)[0];
  out[0] = bump_->strength * bump_profile(std::abs(u) / bump_->radius) * u;
  return out;
}

Mat DoublingFamilyMap::perturbation_jacobian(const TorusPoint& x) const {
  Mat out = Mat::Zero(1, 1);
  if (!has_perturbation()) return out;
  const double u = displacement(TorusPoint{bump_->site}, x)[0];
  const double s = std::abs(u) / bump_->radius;
  out(0, 0) = bump_->strength * (bump_profile(s) + bump_profile_derivative(s) * s);
  return out;
}

// ---------------------------------------------------------------------------
// perturbed example

PerturbedExampleParams PerturbedExampleParams::reference() {
  PerturbedExampleParams p;
  p.base = IntMat::Identity(2, 2) * 4;
  p.p = TorusPoint{1.0 / 3.0, 1.0 / 3.0};
  p.q_sites = {TorusPoint{2.0 / 3.0, 2.0 / 3.0}};
  p.rotation_angles = {std::numbers::pi / 7.0};
  return p;
}

PerturbedExampleMap::PerturbedExampleMap(PerturbedExampleParams params)
    : PerturbedLinearMap(params.base),
      params_(std::move(params)),
      u0_(params_.u0_center.value_or(params_.p), params_.u0_radius) {
  const int n = dimension();
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(to_real(params_.base)));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) {
    order[i] = i;
    if (std::abs(es.eigenvalues()[i].imag()) > 1e-12) throw Error(ErrorCode::ConstraintViolation, "base map needs real eigenvalues");
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(es.eigenvalues()[a]) < std::abs(es.eigenvalues()[b]); });
  basis_.resize(n, n);
  for (int i = 0; i < n; ++i) basis_.col(i) = es.eigenvectors().col(order[i]).real().normalized();
  if (std::abs(basis_.determinant()) < 1e-9) throw Error(ErrorCode::ConstraintViolation, "base map is not diagonalizable");
  basis_inverse_ = basis_.inverse();
}

bool PerturbedExampleMap::has_perturbation() const {
  if (params_.pitchfork_strength != 0.0) return true;
  return std::any_of(params_.rotation_angles.begin(), params_.rotation_angles.end(), [](double a) { return a != 0.0; });
}

bool PerturbedExampleMap::in_support(const TorusPoint& x) const {
  if (torus_distance(x, params_.p) < params_.pitchfork_radius) return true;
  for (const auto& q : params_.q_sites)
    if (torus_distance(x, q) < params_.rotation_radius) return true;
  return false;
}

Mat PerturbedExampleMap::rotation_in_plane(int plane, double angle) const {
  const int n = dimension();
  Mat r = Mat::Identity(n, n);
  r(plane, plane) = std::cos(angle);
  r(plane, plane + 1) = -std::sin(angle);
  r(plane + 1, plane) = std::sin(angle);
  r(plane + 1, plane + 1) = std::cos(angle);
  return basis_ * r * basis_inverse_;
}

Mat PerturbedExampleMap::rotation_in_plane_derivative(int plane, double angle) const {
  const int n = dimension();
  Mat r = Mat::Zero(n, n);
  r(plane, plane) = -std::sin(angle);
  r(plane, plane + 1) = -std::cos(angle);
  r(plane + 1, plane) = std::cos(angle);
  r(plane + 1, plane + 1) = -std::sin(angle);
  return basis_ * r * basis_inverse_;
}

Vec PerturbedExampleMap::perturbation(const TorusPoint& x) const {
  const int n = dimension();
  Vec out = Vec::Zero(n);
  const double kappa = params_.pitchfork_strength;
  if (kappa != 0.0) {
    const Vec u = displacement(params_.p, x);
    const double s = u.norm() / params_.pitchfork_radius;
    if (s < 1.0) {
      const double t = basis_inverse_.row(params_.pitchfork_direction).dot(u);
      const double g = kappa * (-t + params_.pitchfork_cubic * t * t * t);
      out += basis_.col(params_.pitchfork_direction) * (bump_profile(s) * g);
    }
  }
  const Mat e = to_real(params_.base);
  for (std::size_t i = 0; i < params_.q_sites.size(); ++i) {
    const double angle = params_.rotation_angles[i];
    if (angle == 0.0) continue;
    const Vec u = displacement(params_.q_sites[i], x);
    const double s = u.norm() / params_.rotation_radius;
    if (s >= 1.0) continue;
    const Mat m = rotation_in_plane(static_cast<int>(i), angle * bump_profile(s));
    out += e * (m - Mat::Identity(n, n)) * u;
  }
  return out;
}

Mat PerturbedExampleMap::perturbation_jacobian(const TorusPoint& x) const {
  const int n = dimension();
  Mat out = Mat::Zero(n, n);
  const double kappa = params_.pitchfork_strength;
  if (kappa != 0.0) {
    const Vec u = displacement(params_.p, x);
    const double s = u.norm() / params_.pitchfork_radius;
    if (s < 1.0) {
      const int w = params_.pitchfork_direction;
      const double c = params_.pitchfork_cubic;
      const double t = basis_inverse_.row(w).dot(u);
      const double g = kappa * (-t + c * t * t * t);
      const double dg = kappa * (-1.0 + 3.0 * c * t * t);
      const Vec grad = bump_gradient(u, params_.pitchfork_radius);
      const Vec row = g * grad + bump_profile(s) * dg * basis_inverse_.row(w).transpose();
      out += basis_.col(w) * row.transpose();
    }
  }
  const Mat e = to_real(params_.base);
  for (std::size_t i = 0; i < params_.q_sites.size(); ++i) {
    const double angle = params_.rotation_angles[i];
    if (angle == 0.0) continue;
    const Vec u = displacement(params_.q_sites[i], x);
    const double s = u.norm() / params_.rotation_radius;
    if (s >= 1.0) continue;
    const int plane = static_cast<int>(i);
    const double theta = angle * bump_profile(s);
    const Vec grad_theta = angle * bump_gradient(u, params_.rotation_radius);
    const Mat m = rotation_in_plane(plane, theta);
    const Mat dm = rotation_in_plane_derivative(plane, theta);
    out += e * ((m - Mat::Identity(n, n)) + (dm * u) * grad_theta.transpose());
  }
  return out;
}

nlohmann::json PerturbedExampleMap::descriptor() const {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& s : params_.q_sites) q.push_back(to_json(s));
  nlohmann::json j{{"family", "perturbed_example"},
                   {"matrix", to_json(params_.base)},
                   {"p", to_json(params_.p)},
                   {"u0_radius", params_.u0_radius},
                   {"pitchfork_radius", params_.pitchfork_radius},
                   {"pitchfork_strength", params_.pitchfork_strength},
                   {"pitchfork_cubic", params_.pitchfork_cubic},
                   {"pitchfork_direction", params_.pitchfork_direction},
                   {"q_sites", q},
                   {"rotation_radius", params_.rotation_radius},
                   {"rotation_angles", params_.rotation_angles},
                   {"volume_grid", params_.volume_grid}};
  if (params_.u0_center) j["u0_center"] = to_json(*params_.u0_center);
  return j;
}

namespace {

bool is_fixed(const IntMat& e, const TorusPoint& x) {
  const Vec d = wrap_difference(to_real(e) * x.coords() - x.coords());
  return d.norm() < 1e-12;
}

[[noreturn]] void violation(const std::string& what) { throw Error(ErrorCode::ConstraintViolation, what); }

}  // namespace

std::shared_ptr<const PerturbedExampleMap> build_perturbed_example(const PerturbedExampleParams& params) {
  const int n = static_cast<int>(params.base.rows());
  if (params.p.dim() != n) violation("p has the wrong dimension");
  if (params.q_sites.size() != params.rotation_angles.size()) violation("one rotation angle per q site is required");
  if (static_cast<int>(params.q_sites.size()) > n - 1) violation("at most n-1 rotation sites");
  if (params.pitchfork_direction < 0 || params.pitchfork_direction >= n) violation("pitchfork direction out of range");
  if (!(params.pitchfork_radius > 0.0 && params.pitchfork_radius < 0.5)) violation("pitchfork radius must lie in (0, 1/2)");
  if (!(params.rotation_radius > 0.0 && params.rotation_radius < 0.5)) violation("rotation radius must lie in (0, 1/2)");
  if (!(params.u0_radius > 0.0 && params.u0_radius < 0.5)) violation("U0 radius must lie in (0, 1/2)");
  if (params.volume_grid < 2) violation("volume grid too coarse");
  if (eigenvalue_moduli(to_real(params.base)).back() <= 1.0) violation("base map is not expanding");
  if (!is_fixed(params.base, params.p)) violation("p is not a fixed point of the base map");
  const TorusPoint u0c = params.u0_center.value_or(params.p);
  if (torus_distance(u0c, params.p) >= params.u0_radius) violation("p must lie in U0");
  for (std::size_t i = 0; i < params.q_sites.size(); ++i) {
    const auto& q = params.q_sites[i];
    if (q.dim() != n) violation("q site has the wrong dimension");
    if (!is_fixed(params.base, q)) violation("q site is not a fixed point of the base map");
    if (torus_distance(q, u0c) < params.rotation_radius + params.u0_radius) violation("rotation ball intersects U0");
    if (torus_distance(q, params.p) < params.rotation_radius + params.pitchfork_radius) violation("rotation ball intersects the pitchfork support");
    for (std::size_t j = 0; j < i; ++j)
      if (torus_distance(q, params.q_sites[j]) < 2.0 * params.rotation_radius) violation("rotation balls intersect");
  }

  std::shared_ptr<PerturbedExampleMap> map(new PerturbedExampleMap(params));

  const int res = params.volume_grid;
  double sigma = std::numeric_limits<double>::infinity();
  std::vector<long> idx(n, 0);
  while (true) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = static_cast<double>(idx[i]) / res;
    sigma = std::min(sigma, std::abs(map->derivative(TorusPoint(x)).determinant()));
    int axis = 0;
    while (axis < n && ++idx[axis] == res) idx[axis++] = 0;
    if (axis == n) break;
  }
  if (!(sigma > 1.0)) violation("map is not volume expanding on the verification grid (min |det Df| = " + std::to_string(sigma) + ")");
  map->sigma_ = sigma;
  return map;
}

// ---------------------------------------------------------------------------
// iterates

IteratedMap::IteratedMap(MapPtr base, int power) : base_(std::move(base)), power_(power) {
  if (!base_ || power < 1) throw Error(ErrorCode::InvalidArgument, "iterate needs a base map and power >= 1");
  linear_ = IntMat::Identity(base_->dimension(), base_->dimension());
  for (int i = 0; i < power; ++i) linear_ = base_->linear_part() * linear_;
}

TorusPoint IteratedMap::evaluate(const TorusPoint& x) const { return iterate(*base_, x, power_); }

Mat IteratedMap::derivative(const TorusPoint& x) const { return derivative_cocycle(*base_, x, power_); }

std::vector<TorusPoint> IteratedMap::inverse_branch_points(const TorusPoint& y) const {
  if (static_cast<double>(degree()) > 1e6) throw Error(ErrorCode::BudgetExceeded, "iterate degree too large to enumerate");
  std::vector<TorusPoint> level{y};
  for (int i = 0; i < power_; ++i) {
    std::vector<TorusPoint> next;
    for (const auto& p : level) {
      auto pre = base_->inverse_branch_points(p);
      next.insert(next.end(), pre.begin(), pre.end());
    }
    level = std::move(next);
  }
  return level;
}

TorusPoint IteratedMap::local_inverse(const TorusPoint& w_ref, const TorusPoint& y) const {
  std::vector<TorusPoint> orbit{w_ref};
  for (int i = 1; i < power_; ++i) orbit.push_back(base_->evaluate(orbit.back()));
  TorusPoint z = y;
  for (int i = power_ - 1; i >= 0; --i) z = base_->local_inverse(orbit[i], z);
  return z;
}

nlohmann::json IteratedMap::descriptor() const { return {{"family", "iterate"}, {"base", base_->descriptor()}, {"power", power_}}; }

// ---------------------------------------------------------------------------
// cocycles

Mat ScaledMatrix::value() const { return mantissa * std::exp(log_scale); }

double ScaledMatrix::log_conorm() const { return std::log(conorm(mantissa)) + log_scale; }

ScaledMatrix derivative_cocycle_scaled(const DynamicalMap& f, const TorusPoint& x, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "cocycle length must be >= 1");
  ScaledMatrix out{Mat::Identity(f.dimension(), f.dimension()), 0.0};
  TorusPoint p = x;
  for (int i = 0; i < k; ++i) {
    out.mantissa = f.derivative(p) * out.mantissa;
    const double big = out.mantissa.cwiseAbs().maxCoeff();
    if (big > 1e100) {
      out.mantissa /= big;
      out.log_scale += std::log(big);
    }
    if (i + 1 < k) p = f.evaluate(p);
  }
  return out;
}

Mat derivative_cocycle(const DynamicalMap& f, const TorusPoint& x, int k) { return derivative_cocycle_scaled(f, x, k).value(); }

TorusPoint iterate(const DynamicalMap& f, TorusPoint x, int k) {
  for (int i = 0; i < k; ++i) x = f.evaluate(x);
  return x;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const TorusPoint& x) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < x.dim(); ++i) j.push_back(x[i]);
  return j;
}

TorusPoint point_from_json(const nlohmann::json& j) {
  if (j.is_number()) return TorusPoint{j.get<double>()};
  if (!j.is_array() || j.empty() || j.size() > static_cast<std::size_t>(kMaxDim)) throw Error(ErrorCode::InvalidArgument, "point must be a number or an array of 1..4 numbers");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return TorusPoint(v);
}

nlohmann::json to_json(const Mat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

nlohmann::json to_json(const IntMat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

IntMat int_matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || j.size() > static_cast<std::size_t>(kMaxDim)) throw Error(ErrorCode::InvalidArgument, "matrix must be a square array of 1..4 rows");
  const int n = static_cast<int>(j.size());
  IntMat m(n, n);
  for (int i = 0; i < n; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != n) throw Error(ErrorCode::InvalidArgument, "matrix must be square");
    for (int k = 0; k < n; ++k) m(i, k) = j[i][k].get<long long>();
  }
  return m;
}

static PerturbedExampleParams perturbed_params_from_json(const nlohmann::json& j) {
  PerturbedExampleParams p = j.value("preset", std::string()) == "reference" ? PerturbedExampleParams::reference() : PerturbedExampleParams{};
  if (j.contains("matrix")) p.base = int_matrix_from_json(j.at("matrix"));
  if (j.contains("p")) p.p = point_from_json(j.at("p"));
  if (j.contains("u0_center")) p.u0_center = point_from_json(j.at("u0_center"));
  p.u0_radius = j.value("u0_radius", p.u0_radius);
  p.pitchfork_radius = j.value("pitchfork_radius", p.pitchfork_radius);
  p.pitchfork_strength = j.value("pitchfork_strength", p.pitchfork_strength);
  p.pitchfork_cubic = j.value("pitchfork_cubic", p.pitchfork_cubic);
  p.pitchfork_direction = j.value("pitchfork_direction", p.pitchfork_direction);
  if (j.contains("q_sites")) {
    p.q_sites.clear();
    for (const auto& q : j.at("q_sites")) p.q_sites.push_back(point_from_json(q));
  }
  p.rotation_radius = j.value("rotation_radius", p.rotation_radius);
  if (j.contains("rotation_angles")) p.rotation_angles = j.at("rotation_angles").get<std::vector<double>>();
  p.volume_grid = j.value("volume_grid", p.volume_grid);
  if (p.base.size() == 0) throw Error(ErrorCode::InvalidArgument, "perturbed_example needs a matrix or preset");
  return p;
}

MapPtr make_map(const nlohmann::json& d) {
  try {
    const std::string family = d.at("family").get<std::string>();
    if (family == "linear") return std::make_shared<LinearMap>(int_matrix_from_json(d.at("matrix")));
    if (family == "linear_expanding") return std::make_shared<LinearExpandingMap>(int_matrix_from_json(d.at("matrix")));
    if (family == "doubling") {
      std::optional<DoublingFamilyMap::Bump> bump;
      if (d.contains("bump")) {
        const auto& b = d.at("bump");
        bump = DoublingFamilyMap::Bump{b.at("site").get<double>(), b.at("radius").get<double>(), b.at("strength").get<double>()};
      }
      return std::make_shared<DoublingFamilyMap>(d.value("multiplier", 2), bump);
    }
    if (family == "perturbed_example") return build_perturbed_example(perturbed_params_from_json(d));
    if (family == "iterate") return std::make_shared<IteratedMap>(make_map(d.at("base")), d.at("power").get<int>());
    throw Error(ErrorCode::InvalidArgument, "unknown map family '" + family + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad map descriptor: ") + e.what());
  }
}

}  // namespace torusdyn
