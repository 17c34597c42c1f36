#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "torusdyn/dynamics.hpp"

namespace torusdyn {

inline constexpr double kPeriodicTol = 1e-10;
inline constexpr double kHyperMargin = 1e-6;

// ---------------------------------------------------------------------------
// forward orbits

struct ForwardDensity {
  bool dense = false;
  std::optional<int> first_n;  // smallest n with {x, ..., f^n x} eps-dense
};

// Density of the forward orbit prefix of length n_max + 1. The certificate is
// monotone under adding points, so first_n is found by bisection.
// Orbits are computed in double precision, so for maps with an integer linear
// part every orbit of a dyadic input eventually collapses (doubling sends any
// double to 0 within 54 steps).
ForwardDensity forward_orbit_density(const DynamicalMap& f, const TorusPoint& x, int n_max, double eps);

// Same certificate on the exact orbit of a rational point given as decimal
// strings (e.g. "0.6180339887..."). Only for maps without perturbation; the
// orbit is computed with big-integer arithmetic modulo 10^digits.
ForwardDensity forward_orbit_density_exact(const DynamicalMap& f, const std::vector<std::string>& decimal_coords, int n_max,
                                           double eps);
std::vector<TorusPoint> exact_linear_orbit(const IntMat& linear, const std::vector<std::string>& decimal_coords, int n_max);

// ---------------------------------------------------------------------------
// pre-orbits

struct PreOrbitTree {
  TorusPoint root;
  int depth = 0;
  // levels[j] holds all solutions of f^j(w) = root; levels[0] = {root}.
  std::vector<std::vector<TorusPoint>> levels;
};

// Complete tree of pre-images. Throws BudgetExceeded (detail = largest depth
// whose level fits) when degree^depth_max > node_budget.
PreOrbitTree build_preorbit_tree(const DynamicalMap& f, const TorusPoint& x, int depth_max, std::size_t node_budget,
                                 int threads = 0);

struct PreOrbitCertificate {
  bool dense = false;
  int depth_used = 0;          // depth at which density was certified (or depth reached)
  double eps = 0.0;
  double prune_cell = 0.0;     // side of the frontier pruning cells
  std::size_t union_size = 0;  // representatives kept over all levels
  std::size_t nodes_expanded = 0;
  std::vector<std::size_t> frontier_sizes;
};

// Level-by-level pre-image search keeping one representative per pruning
// cell. Returns dense = false with depth_used = depth_max if density is not
// reached. Throws Inconclusive (detail = last completed depth) if node_budget
// expansions are exhausted first.
PreOrbitCertificate preorbit_density_certificate(const DynamicalMap& f, const TorusPoint& x, double eps, int depth_max,
                                                 std::size_t node_budget, int threads = 0);

// ---------------------------------------------------------------------------
// periodic points

enum class Classification { Source, Sink, Saddle, Nonhyperbolic };
const char* to_string(Classification c);

struct PeriodicOrbit {
  TorusPoint point;
  int period = 1;
  Mat multiplier;               // Df^k at the point
  std::vector<double> moduli;   // eigenvalue moduli, descending
  Classification classification = Classification::Nonhyperbolic;
  bool complex_pair = false;
  double residual = 0.0;        // |f^k(x) - x| on the torus
};

Classification classify(const std::vector<double>& moduli, double margin = kHyperMargin);
PeriodicOrbit make_periodic_orbit(const DynamicalMap& f, const TorusPoint& x, int k);

struct PeriodicSearch {
  std::vector<PeriodicOrbit> orbits;  // sorted lexicographically by coordinates
  std::size_t seeds = 0;
  std::size_t dropped = 0;            // seeds whose Newton iteration failed
};

// Newton iteration on f^k(x) - x from a resolution^n seed grid.
PeriodicSearch find_periodic_points(const DynamicalMap& f, int k, int seed_grid_resolution, int threads = 0);

// ---------------------------------------------------------------------------
// hypotheses of the robust transitivity theorem

struct ExpansionReport {
  bool expanding = false;
  double min_conorm = 0.0;
  TorusPoint argmin;
  std::size_t points_checked = 0;
};

// Smallest singular value of Df on a resolution^n grid, skipping points in u0.
ExpansionReport verify_expanding_off_U0(const DynamicalMap& f, const std::optional<Ball>& u0, int grid_resolution,
                                        double margin = kHyperMargin, int threads = 0);

struct IrgReport {
  bool holds = false;
  int n = 0;                   // first N at which the containment certified
  double eps = 0.0;
  double r_target = 0.0;
  std::size_t samples = 0;     // sample points per tested N
  double worst_ratio = 0.0;    // max pulled-back distance / eps at the reported N
};

// Internal radius growth: searches the first N <= n_steps with
// B_R(f^N x) inside f^N(B_eps(x)), checked by pulling back a boundary sample
// (64 n points) and an interior lattice of B_R through the branch along the
// orbit. Throws OrbitEntersU0 (detail = orbit index) if the orbit meets u0.
IrgReport verify_irg(const DynamicalMap& f, const TorusPoint& x, int n_steps, double eps, double r_target,
                     const std::optional<Ball>& u0 = std::nullopt);

struct ArcEscapeReport {
  bool falsified = false;      // some sampled arc had no escaping point
  int arcs_tested = 0;
  int horizon = 0;
  int min_escaping_points = 0; // over arcs, number of sample points staying in U1^c
};

// Sampled falsifier for the arc-escape hypothesis: random segments of length
// > delta0 in U0^c, each required to carry a sample point whose orbit stays in
// U1^c for k = 1..horizon. A pass is evidence only.
ArcEscapeReport sample_arc_escape(const DynamicalMap& f, const Ball& u0, const Ball& u1, double delta0, int n_arcs,
                                  int points_per_arc, int horizon, std::uint64_t seed);

struct PreimageReport {
  bool holds = false;
  std::size_t points_checked = 0;
  std::size_t failures = 0;
};

// Every grid point z outside u1 has a pre-image outside u1.
PreimageReport verify_preimage_outside(const DynamicalMap& f, const Ball& u1, int grid_resolution, int threads = 0);

}  // namespace torusdyn
