#include "torusdyn/torus_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "torusdyn/random.hpp"

#include "torusdyn/errors.hpp"

namespace torusdyn {

double reduce_coordinate(double v) {
  double r = v - std::floor(v);
  // v slightly below an integer can round up to exactly 1.0.
  if (r >= 1.0) r = 0.0;
  return r;
}

TorusPoint::TorusPoint(const Vec& lift) : coords_(lift) {
  for (int i = 0; i < coords_.size(); ++i) coords_[i] = reduce_coordinate(coords_[i]);
}

TorusPoint::TorusPoint(std::initializer_list<double> coords) {
  coords_.resize(static_cast<int>(coords.size()));
  int i = 0;
  for (double c : coords) coords_[i++] = reduce_coordinate(c);
}

Vec wrap_difference(const Vec& d) {
  Vec out = d;
  for (int i = 0; i < out.size(); ++i) {
    out[i] -= std::floor(out[i] + 0.5);
  }
  return out;
}

Vec displacement(const TorusPoint& from, const TorusPoint& to) { return wrap_difference(to.coords() - from.coords()); }

TorusPoint translate(const TorusPoint& x, const Vec& v) { return TorusPoint(Vec(x.coords() + v)); }

double torus_distance(const TorusPoint& x, const TorusPoint& y) {
  double s = 0.0;
  for (int i = 0; i < x.dim(); ++i) {
    double d = std::abs(x[i] - y[i]);
    d = std::min(d, 1.0 - d);
    s += d * d;
  }
  return std::sqrt(s);
}

Ball::Ball(TorusPoint center, double radius) : center_(std::move(center)), radius_(radius) {
  if (!(radius > 0.0) || !(radius < 0.5)) throw Error(ErrorCode::InvalidArgument, "ball radius must lie in (0, 1/2)");
}

// ---------------------------------------------------------------------------
// PointIndex

PointIndex::PointIndex(int dim, double cell_size) : dim_(dim) {
  if (dim < 1 || dim > kMaxDim) throw Error(ErrorCode::InvalidArgument, "unsupported torus dimension");
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "cell size must be positive");
  const double limit = std::pow(2.0, 62.0 / dim);
  per_axis_ = static_cast<int>(std::clamp(std::floor(1.0 / cell_size), 1.0, std::min(limit, 1e9)));
}

std::int64_t PointIndex::bucket_of(const std::array<long, kMaxDim>& cell) const {
  std::int64_t id = 0;
  for (int i = 0; i < dim_; ++i) id = id * per_axis_ + cell[i];
  return id;
}

std::int64_t PointIndex::bucket_of(const TorusPoint& p) const {
  std::array<long, kMaxDim> cell{};
  for (int i = 0; i < dim_; ++i) cell[i] = std::min<long>(per_axis_ - 1, static_cast<long>(p[i] * per_axis_));
  return bucket_of(cell);
}

void PointIndex::insert(const TorusPoint& p) {
  buckets_[bucket_of(p)].push_back(static_cast<std::uint32_t>(points_.size()));
  points_.push_back(p);
}

bool PointIndex::insert_if_cell_empty(const TorusPoint& p) {
  auto& bucket = buckets_[bucket_of(p)];
  if (!bucket.empty()) return false;
  bucket.push_back(static_cast<std::uint32_t>(points_.size()));
  points_.push_back(p);
  return true;
}

std::optional<double> PointIndex::nearest_within(const TorusPoint& q, double radius) const {
  const long reach = static_cast<long>(std::ceil(radius * per_axis_));
  std::array<long, kMaxDim> base{}, lo{}, count{};
  for (int i = 0; i < dim_; ++i) {
    base[i] = std::min<long>(per_axis_ - 1, static_cast<long>(q[i] * per_axis_));
    if (2 * reach + 1 >= per_axis_) {
      lo[i] = 0;
      count[i] = per_axis_;
    } else {
      lo[i] = base[i] - reach;
      count[i] = 2 * reach + 1;
    }
  }
  double best = std::numeric_limits<double>::infinity();
  std::array<long, kMaxDim> off{};
  std::array<long, kMaxDim> cell{};
  while (true) {
    for (int i = 0; i < dim_; ++i) cell[i] = ((lo[i] + off[i]) % per_axis_ + per_axis_) % per_axis_;
    if (auto it = buckets_.find(bucket_of(cell)); it != buckets_.end()) {
      for (auto idx : it->second) best = std::min(best, torus_distance(q, points_[idx]));
    }
    int axis = 0;
    while (axis < dim_ && ++off[axis] == count[axis]) off[axis++] = 0;
    if (axis == dim_) break;
  }
  if (best <= radius) return best;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// density certificate

namespace {

enum class CellStatus { Covered, Uncovered, Undecided };

struct CoverSearch {
  const PointIndex& index;
  double eps;
  int dim;
  int max_refine;
  std::size_t cells = 0;
  double worst = 0.0;

  CellStatus check(const Vec& center, double half_width, int depth) {
    ++cells;
    const double rho = half_width * std::sqrt(static_cast<double>(dim));
    const auto d = index.nearest_within(TorusPoint(center), eps + rho);
    if (!d) return CellStatus::Uncovered;
    if (*d + rho < eps) {
      worst = std::max(worst, *d + rho);
      return CellStatus::Covered;
    }
    if (*d - rho >= eps) return CellStatus::Uncovered;
    if (depth >= max_refine) return CellStatus::Undecided;
    const double child = half_width / 2.0;
    for (int mask = 0; mask < (1 << dim); ++mask) {
      Vec c = center;
      for (int i = 0; i < dim; ++i) c[i] += (mask >> i & 1) ? child : -child;
      const auto s = check(c, child, depth + 1);
      if (s != CellStatus::Covered) return s;
    }
    return CellStatus::Covered;
  }
};

}  // namespace

DensityReport density_certificate(std::span<const TorusPoint> points, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
  if (points.empty()) throw Error(ErrorCode::InvalidArgument, "point set must be non-empty");
  const int n = points.front().dim();
  DensityReport report;
  report.eps = eps;
  // Covering radius can never exceed the torus diameter.
  if (eps > std::sqrt(static_cast<double>(n)) / 2.0) {
    report.dense = true;
    report.worst_cover_bound = std::sqrt(static_cast<double>(n)) / 2.0;
    return report;
  }
  const int m = static_cast<int>(std::ceil(2.0 / eps));
  report.grid_per_axis = m;
  PointIndex index(n, 1.0 / m);
  for (const auto& p : points) index.insert(p);

  CoverSearch search{index, eps, n, n == 1 ? 12 : (n == 2 ? 8 : 5)};
  const double h = 1.0 / m;
  std::array<long, kMaxDim> cell{};
  bool dense = true;
  while (dense) {
    Vec c(n);
    for (int i = 0; i < n; ++i) c[i] = (cell[i] + 0.5) * h;
    if (search.check(c, h / 2.0, 0) != CellStatus::Covered) dense = false;
    int axis = 0;
    while (axis < n && ++cell[axis] == m) cell[axis++] = 0;
    if (axis == n) break;
  }
  report.dense = dense;
  report.cells_checked = search.cells;
  report.worst_cover_bound = search.worst;
  return report;
}

bool is_epsilon_dense(std::span<const TorusPoint> points, double eps) { return density_certificate(points, eps).dense; }

std::vector<Vec> ball_sample_offsets(int n, double r) {
  std::vector<Vec> out;
  const int boundary = 64 * n;
  if (n == 1) {
    for (int i = 0; i < boundary; ++i) {
      Vec v(1);
      v[0] = -r + 2.0 * r * i / (boundary - 1);
      out.push_back(v);
    }
    return out;
  }
  if (n == 2) {
    for (int i = 0; i < boundary; ++i) {
      const double t = 2.0 * std::numbers::pi * i / boundary;
      Vec v(2);
      v << r * std::cos(t), r * std::sin(t);
      out.push_back(v);
    }
  } else {
    Rng rng(0x5eed);
    for (int i = 0; i < boundary; ++i) {
      Vec v(n);
      for (int c = 0; c < n; ++c) {
        const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
        v[c] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      }
      out.push_back(v * (r / v.norm()));
    }
  }
  std::array<long, kMaxDim> idx{};
  while (true) {
    Vec v(n);
    for (int c = 0; c < n; ++c) v[c] = (static_cast<double>(idx[c]) - 4.0) * r / 4.0;
    if (v.norm() < r) out.push_back(v);
    int axis = 0;
    while (axis < n && ++idx[axis] == 9) idx[axis++] = 0;
    if (axis == n) break;
  }
  return out;
}


}  // namespace torusdyn
