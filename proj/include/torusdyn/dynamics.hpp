#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusdyn/linalg.hpp"
#include "torusdyn/torus_geometry.hpp"

namespace torusdyn {

// Tolerances shared by every branch computation.
inline constexpr double kBranchTol = 1e-10;
inline constexpr double kNewtonTol = 1e-12;
inline constexpr int kMaxNewtonIters = 50;

// A local diffeomorphism of T^n: a covering map whose lift is L x + phi(x)
// with L an integer matrix and phi periodic. The number of pre-images of any
// point is |det L|.
class DynamicalMap {
 public:
  virtual ~DynamicalMap() = default;

  virtual int dimension() const = 0;
  virtual const IntMat& linear_part() const = 0;
  long long degree() const;

  virtual TorusPoint evaluate(const TorusPoint& x) const = 0;
  virtual Mat derivative(const TorusPoint& x) const = 0;

  // All solutions of f(w) = y, ordered by branch label. Throws
  // BranchCollision / NewtonDivergence when the enumeration fails.
  virtual std::vector<TorusPoint> inverse_branch_points(const TorusPoint& y) const = 0;

  // The inverse branch through `w_ref`: the point w obtained by lifting the
  // straight segment from f(w_ref) to `y` starting at w_ref. Throws
  // NewtonDivergence if the lift cannot be followed.
  virtual TorusPoint local_inverse(const TorusPoint& w_ref, const TorusPoint& y) const = 0;

  virtual std::string family() const = 0;
  virtual nlohmann::json descriptor() const = 0;
  virtual bool is_linear() const { return false; }
};

using MapPtr = std::shared_ptr<const DynamicalMap>;

// Maps whose lift is L x + phi(x). Subclasses provide phi and its Jacobian;
// the base class handles evaluation and all branch enumeration (Newton from
// the exact pre-images of the linear part, falling back to continuation in
// the perturbation strength).
class PerturbedLinearMap : public DynamicalMap {
 public:
  explicit PerturbedLinearMap(IntMat linear);

  int dimension() const override { return static_cast<int>(linear_.rows()); }
  const IntMat& linear_part() const override { return linear_; }

  TorusPoint evaluate(const TorusPoint& x) const override;
  Mat derivative(const TorusPoint& x) const override;
  std::vector<TorusPoint> inverse_branch_points(const TorusPoint& y) const override;
  TorusPoint local_inverse(const TorusPoint& w_ref, const TorusPoint& y) const override;

  // Pre-images of 0 under the linear part, sorted; these label the branches.
  const std::vector<Vec>& kernel_points() const { return kernel_; }

  virtual Vec perturbation(const TorusPoint& x) const = 0;
  virtual Mat perturbation_jacobian(const TorusPoint& x) const = 0;
  virtual bool has_perturbation() const = 0;

 protected:
  // Newton on wrap(L w + s*phi(w) - y) from the lifted seed. Returns the
  // converged lift or nullopt.
  std::optional<Vec> newton(const Vec& seed, const Vec& y, double s) const;

 private:
  std::optional<std::vector<Vec>> solve_branches(const TorusPoint& y, int homotopy_steps) const;

  IntMat linear_;
  Mat linear_real_;
  Mat linear_inverse_;
  std::vector<Vec> kernel_;
};

class LinearMap : public PerturbedLinearMap {
 public:
  explicit LinearMap(IntMat matrix);
  std::string family() const override { return "linear"; }
  nlohmann::json descriptor() const override;
  bool is_linear() const override { return true; }
  Vec perturbation(const TorusPoint& x) const override { return Vec::Zero(x.dim()); }
  Mat perturbation_jacobian(const TorusPoint& x) const override { return Mat::Zero(x.dim(), x.dim()); }
  bool has_perturbation() const override { return false; }
};

// Integer matrix with every eigenvalue modulus > 1 (validated).
class LinearExpandingMap : public LinearMap {
 public:
  explicit LinearExpandingMap(IntMat matrix);
  std::string family() const override { return "linear_expanding"; }
  nlohmann::json descriptor() const override;
};

// C^2 cutoff rho(s) = (1 - s^2)^3 on [0, 1), zero outside.
double bump_profile(double s);
double bump_profile_derivative(double s);

// x -> m x mod 1 with an optional radial bump phi(u) = strength * rho(|u|/radius) * u
// around `site`, used for derived-from-expanding tests.
class DoublingFamilyMap : public PerturbedLinearMap {
 public:
  struct Bump {
    double site = 0.0;
    double radius = 0.1;
    double strength = 0.0;
  };

  explicit DoublingFamilyMap(int multiplier, std::optional<Bump> bump = std::nullopt);

  int multiplier() const { return multiplier_; }
  const std::optional<Bump>& bump() const { return bump_; }

  std::string family() const override { return "doubling"; }
  nlohmann::json descriptor() const override;
  bool is_linear() const override { return !has_perturbation(); }
  Vec perturbation(const TorusPoint& x) const override;
  Mat perturbation_jacobian(const TorusPoint& x) const override;
  bool has_perturbation() const override { return bump_ && bump_->strength != 0.0; }

 private:
  int multiplier_;
  std::optional<Bump> bump_;
};

struct PerturbedExampleParams {
  IntMat base;                       // linear expanding endomorphism E
  TorusPoint p;                      // pitchfork site, fixed by E
  std::optional<TorusPoint> u0_center;  // defaults to p
  double u0_radius = 0.12;           // U0 = ball(u0_center, u0_radius)
  double pitchfork_radius = 0.12;    // support radius of the pitchfork bump
  double pitchfork_strength = 3.5;   // kappa; multiplier at p along the chosen direction drops by kappa
  double pitchfork_cubic = 4.0;      // c in t -> (lambda - kappa) t + kappa c t^3
  int pitchfork_direction = 0;       // eigenvector index (eigenvalues sorted by modulus)
  std::vector<TorusPoint> q_sites;   // fixed points of E outside U0
  double rotation_radius = 0.12;     // epsilon of the balls around each q
  std::vector<double> rotation_angles;  // radians, one per q site
  int volume_grid = 256;             // per-axis resolution of the |det Df| check

  // n = 2, E = 4 Id, p = (1/3, 1/3), one q site (2/3, 2/3) rotated by pi/7.
  static PerturbedExampleParams reference();
};

// The isotopy of a linear expanding map: a pitchfork at p (saddle p, two
// repelling fixed points born nearby) and a rotation at every q_i making a pair
// of expanding eigenvalues complex. Equal to E outside the supports.
class PerturbedExampleMap : public PerturbedLinearMap {
 public:
  const PerturbedExampleParams& params() const { return params_; }
  const Ball& u0() const { return u0_; }
  // Minimum |det Df| found on the verification grid.
  double sigma() const { return sigma_; }
  const Mat& eigenbasis() const { return basis_; }

  std::string family() const override { return "perturbed_example"; }
  nlohmann::json descriptor() const override;
  Vec perturbation(const TorusPoint& x) const override;
  Mat perturbation_jacobian(const TorusPoint& x) const override;
  bool has_perturbation() const override;

  // True if x lies in the support of some bump.
  bool in_support(const TorusPoint& x) const;

 private:
  friend std::shared_ptr<const PerturbedExampleMap> build_perturbed_example(const PerturbedExampleParams&);
  explicit PerturbedExampleMap(PerturbedExampleParams params);

  Mat rotation_in_plane(int plane, double angle) const;
  Mat rotation_in_plane_derivative(int plane, double angle) const;

  PerturbedExampleParams params_;
  Ball u0_;
  Mat basis_;
  Mat basis_inverse_;
  double sigma_ = 0.0;
};

// Validates the disjointness invariants and the volume-expanding grid check;
// throws ConstraintViolation otherwise. A pitchfork support larger than U0 is
// accepted (the map then fails the expanding-off-U0 verification).
std::shared_ptr<const PerturbedExampleMap> build_perturbed_example(const PerturbedExampleParams& params);

// f^power, with branches obtained by composing the base map's branches.
class IteratedMap : public DynamicalMap {
 public:
  IteratedMap(MapPtr base, int power);

  const MapPtr& base() const { return base_; }
  int power() const { return power_; }

  int dimension() const override { return base_->dimension(); }
  const IntMat& linear_part() const override { return linear_; }
  TorusPoint evaluate(const TorusPoint& x) const override;
  Mat derivative(const TorusPoint& x) const override;
  std::vector<TorusPoint> inverse_branch_points(const TorusPoint& y) const override;
  TorusPoint local_inverse(const TorusPoint& w_ref, const TorusPoint& y) const override;
  std::string family() const override { return "iterate"; }
  nlohmann::json descriptor() const override;
  bool is_linear() const override { return base_->is_linear(); }

 private:
  MapPtr base_;
  int power_;
  IntMat linear_;
};

// Product Df(f^{k-1}x) ... Df(x) carried as mantissa * exp(log_scale) so
// long products never overflow.
struct ScaledMatrix {
  Mat mantissa;
  double log_scale = 0.0;

  Mat value() const;
  double log_conorm() const;
};

ScaledMatrix derivative_cocycle_scaled(const DynamicalMap& f, const TorusPoint& x, int k);
Mat derivative_cocycle(const DynamicalMap& f, const TorusPoint& x, int k);

TorusPoint iterate(const DynamicalMap& f, TorusPoint x, int k);

// Builds a map from its JSON descriptor (see README for the schema).
MapPtr make_map(const nlohmann::json& descriptor);

nlohmann::json to_json(const TorusPoint& x);
TorusPoint point_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Mat& m);
nlohmann::json to_json(const IntMat& m);
IntMat int_matrix_from_json(const nlohmann::json& j);

}  // namespace torusdyn
