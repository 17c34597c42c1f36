#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "torusdyn/linalg.hpp"

namespace torusdyn {

// Reduces a real coordinate to [0, 1).
double reduce_coordinate(double v);

// A point of the flat torus T^n. Coordinates are always stored reduced to
// [0, 1); lifts only exist transiently as `Vec`.
class TorusPoint {
 public:
  TorusPoint() = default;
  explicit TorusPoint(const Vec& lift);
  TorusPoint(std::initializer_list<double> coords);

  int dim() const { return static_cast<int>(coords_.size()); }
  double operator[](int i) const { return coords_[i]; }
  const Vec& coords() const { return coords_; }

  friend bool operator==(const TorusPoint& a, const TorusPoint& b) { return a.coords_ == b.coords_; }

 private:
  Vec coords_;
};

struct TorusVector {
  Vec components;
  double norm() const { return components.norm(); }
};

// Shortest displacement from `from` to `to`, each component in [-1/2, 1/2).
Vec displacement(const TorusPoint& from, const TorusPoint& to);

// Wraps each component of a lifted difference into [-1/2, 1/2).
Vec wrap_difference(const Vec& d);

TorusPoint translate(const TorusPoint& x, const Vec& v);

// Flat torus distance: minimum over integer translates of the Euclidean
// distance between lifts.
double torus_distance(const TorusPoint& x, const TorusPoint& y);

class Ball {
 public:
  // Throws InvalidArgument unless 0 < radius < 1/2.
  Ball(TorusPoint center, double radius);

  const TorusPoint& center() const { return center_; }
  double radius() const { return radius_; }
  int dim() const { return center_.dim(); }
  bool contains(const TorusPoint& x) const { return torus_distance(center_, x) < radius_; }

 private:
  TorusPoint center_;
  double radius_;
};

// Bucketed index of torus points for radius-bounded nearest queries.
class PointIndex {
 public:
  PointIndex(int dim, double cell_size);

  void insert(const TorusPoint& p);
  // Inserts only if no indexed point shares the bucket; returns whether inserted.
  bool insert_if_cell_empty(const TorusPoint& p);

  // Distance to the nearest indexed point if one lies within `radius`.
  std::optional<double> nearest_within(const TorusPoint& q, double radius) const;

  std::size_t size() const { return points_.size(); }
  const std::vector<TorusPoint>& points() const { return points_; }
  int dim() const { return dim_; }

 private:
  std::int64_t bucket_of(const TorusPoint& p) const;
  std::int64_t bucket_of(const std::array<long, kMaxDim>& cell) const;

  int dim_;
  int per_axis_;
  std::vector<TorusPoint> points_;
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets_;
};

// Result of the grid covering certificate.
struct DensityReport {
  bool dense = false;
  double eps = 0.0;
  int grid_per_axis = 0;   // base grid cells per axis (mesh <= eps/2)
  std::size_t cells_checked = 0;
  double worst_cover_bound = 0.0;  // largest certified distance bound among covered cells
};

// eps-density certificate. A base grid of mesh <= eps/2 is refined adaptively
// where a cell is neither certainly covered nor certainly uncovered. Positive
// answers guarantee every point of T^n is strictly within eps of S; every
// (eps/2)-dense set (n <= 4) is reported dense. Throws InvalidArgument on
// eps <= 0 or empty S.
DensityReport density_certificate(std::span<const TorusPoint> points, double eps);
bool is_epsilon_dense(std::span<const TorusPoint> points, double eps);

// Deterministic sample of offsets for ball containment and contraction checks:
// 64 n points on the sphere of radius r (an evenly spaced segment in 1-D)
// plus the interior lattice of spacing r/4.
std::vector<Vec> ball_sample_offsets(int n, double r);

}  // namespace torusdyn
