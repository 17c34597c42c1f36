#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "torusdyn/dynamics.hpp"
#include "torusdyn/errors.hpp"
#include "torusdyn/random.hpp"

using namespace torusdyn;

namespace {

IntMat mat2(long long a, long long b, long long c, long long d) {
  IntMat m(2, 2);
  m << a, b, c, d;
  return m;
}

TorusPoint random_point(Rng& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform();
  return TorusPoint(v);
}

// Central finite differences of the lift, used as an independent check of
// every analytic Jacobian.
Mat numeric_jacobian(const DynamicalMap& f, const TorusPoint& x, double h = 1e-6) {
  const int n = f.dimension();
  Mat j(n, n);
  const TorusPoint fx = f.evaluate(x);
  for (int k = 0; k < n; ++k) {
    Vec e = Vec::Zero(n);
    e[k] = h;
    const Vec plus = displacement(fx, f.evaluate(translate(x, e)));
    const Vec minus = displacement(fx, f.evaluate(translate(x, -e)));
    j.col(k) = (plus - minus) / (2 * h);
  }
  return j;
}

std::shared_ptr<const PerturbedExampleMap> reference_example() {
  static auto map = build_perturbed_example(PerturbedExampleParams::reference());
  return map;
}

}  // namespace

TEST_CASE("evaluate examples") {
  DoublingFamilyMap doubling(2);
  CHECK(doubling.evaluate(TorusPoint{0.3})[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(doubling.evaluate(TorusPoint{0.75})[0] == 0.5);
  LinearMap cat(mat2(2, 1, 1, 1));
  const TorusPoint y = cat.evaluate(TorusPoint{0.5, 0.5});
  CHECK(y[0] == 0.5);
  CHECK(y[1] == 0.0);
  CHECK(cat.degree() == 1);
  CHECK(doubling.degree() == 2);
}

TEST_CASE("derivative cocycle examples") {
  DoublingFamilyMap doubling(2);
  CHECK(derivative_cocycle(doubling, TorusPoint{0.123}, 5)(0, 0) == 32.0);
  LinearExpandingMap twice(mat2(2, 0, 0, 2));
  const Mat m = derivative_cocycle(twice, TorusPoint{0.1, 0.7}, 3);
  CHECK(m(0, 0) == 8.0);
  CHECK(m(1, 1) == 8.0);
  CHECK(m(0, 1) == 0.0);
  // Large powers stay finite through the log scale.
  const auto big = derivative_cocycle_scaled(doubling, TorusPoint{0.3}, 2000);
  CHECK(big.log_conorm() == doctest::Approx(2000 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(derivative_cocycle(doubling, TorusPoint{0.3}, 0), Error);
}

TEST_CASE("linear cocycle equals the matrix power") {
  IntMat e = mat2(3, 1, 1, 2);
  LinearExpandingMap f(e);
  IntMat power = IntMat::Identity(2, 2);
  for (int k = 1; k <= 6; ++k) {
    power = e * power;
    const Mat m = derivative_cocycle(f, TorusPoint{0.3, 0.9}, k);
    CHECK((m - to_real(power)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("inverse branch examples") {
  DoublingFamilyMap doubling(2);
  auto pre = doubling.inverse_branch_points(TorusPoint{0.5});
  REQUIRE(pre.size() == 2);
  CHECK(pre[0][0] == 0.25);
  CHECK(pre[1][0] == 0.75);
  pre = doubling.inverse_branch_points(TorusPoint{0.0});
  REQUIRE(pre.size() == 2);
  CHECK(pre[0][0] == 0.0);
  CHECK(pre[1][0] == 0.5);
}

TEST_CASE("linear expanding validation") {
  CHECK_THROWS_AS(LinearExpandingMap(mat2(2, 1, 1, 1)), Error);
  CHECK_THROWS_AS(LinearMap(mat2(1, 2, 2, 4)), Error);
  CHECK_NOTHROW(LinearExpandingMap(mat2(3, 1, 1, 2)));
  CHECK_THROWS_AS(DoublingFamilyMap(1), Error);
  CHECK_THROWS_AS(DoublingFamilyMap(2, DoublingFamilyMap::Bump{0.5, 0.1, -3.5}), Error);
}

TEST_CASE("kernel points enumerate all pre-images of zero") {
  LinearExpandingMap f(mat2(3, 1, 1, 2));  // det 5
  CHECK(f.kernel_points().size() == 5);
  for (const auto& k : f.kernel_points()) {
    const TorusPoint img = f.evaluate(TorusPoint(k));
    CHECK(torus_distance(img, TorusPoint{0.0, 0.0}) < 1e-14);
  }
  LinearExpandingMap g(mat2(4, 0, 0, 4));
  CHECK(g.kernel_points().size() == 16);
}

TEST_CASE("branch round trip and distinctness on all families") {
  Rng rng(2024);
  std::vector<MapPtr> maps{
      std::make_shared<DoublingFamilyMap>(2),
      std::make_shared<DoublingFamilyMap>(3, DoublingFamilyMap::Bump{0.4, 0.15, -1.5}),
      std::make_shared<LinearExpandingMap>(mat2(3, 1, 1, 2)),
      reference_example(),
  };
  for (const auto& f : maps) {
    for (int trial = 0; trial < 60; ++trial) {
      const TorusPoint y = random_point(rng, f->dimension());
      const auto pre = f->inverse_branch_points(y);
      REQUIRE(static_cast<long long>(pre.size()) == f->degree());
      for (std::size_t i = 0; i < pre.size(); ++i) {
        CHECK(torus_distance(f->evaluate(pre[i]), y) < 1e-9);
        for (std::size_t j = 0; j < i; ++j) CHECK(torus_distance(pre[i], pre[j]) > 1e-9);
      }
    }
  }
}

TEST_CASE("local inverse follows the branch through the reference point") {
  Rng rng(99);
  auto f = reference_example();
  for (int trial = 0; trial < 100; ++trial) {
    const TorusPoint w = random_point(rng, 2);
    Vec d(2);
    d << (rng.uniform() - 0.5) * 0.1, (rng.uniform() - 0.5) * 0.1;
    const TorusPoint y = translate(f->evaluate(w), d);
    const TorusPoint z = f->local_inverse(w, y);
    CHECK(torus_distance(f->evaluate(z), y) < 1e-10);
    // The branch has contraction at most 1/conorm, so the pre-image is close to w.
    CHECK(torus_distance(z, w) < d.norm() / 0.4);
  }
}

TEST_CASE("analytic jacobians agree with finite differences") {
  Rng rng(5);
  auto ex = reference_example();
  DoublingFamilyMap bumped(2, DoublingFamilyMap::Bump{0.3, 0.2, -0.9});
  for (int trial = 0; trial < 200; ++trial) {
    TorusPoint x = random_point(rng, 2);
    // Concentrate half the samples inside the bump supports.
    if (trial % 2 == 0) {
      Vec off(2);
      off << (rng.uniform() - 0.5) * 0.2, (rng.uniform() - 0.5) * 0.2;
      x = translate(trial % 4 == 0 ? ex->params().p : ex->params().q_sites[0], off);
    }
    CHECK((ex->derivative(x) - numeric_jacobian(*ex, x)).cwiseAbs().maxCoeff() < 1e-5);
    const TorusPoint t{rng.uniform()};
    CHECK(std::abs(bumped.derivative(t)(0, 0) - numeric_jacobian(bumped, t)(0, 0)) < 1e-6);
  }
}

TEST_CASE("cocycle chain rule") {
  Rng rng(17);
  auto f = reference_example();
  for (int trial = 0; trial < 50; ++trial) {
    const TorusPoint x = random_point(rng, 2);
    const int j = 1 + static_cast<int>(rng.below(4));
    const int k = 1 + static_cast<int>(rng.below(4));
    const Mat whole = derivative_cocycle(*f, x, j + k);
    const Mat split = derivative_cocycle(*f, iterate(*f, x, j), k) * derivative_cocycle(*f, x, j);
    CHECK((whole - split).norm() <= 1e-8 * whole.norm());
  }
}

TEST_CASE("perturbed example: zero strengths reproduce the base map") {
  auto params = PerturbedExampleParams::reference();
  params.pitchfork_strength = 0.0;
  params.rotation_angles = {0.0};
  auto f = build_perturbed_example(params);
  LinearExpandingMap base(params.base);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const TorusPoint x{i / 64.0, j / 64.0};
      CHECK(torus_distance(f->evaluate(x), base.evaluate(x)) == 0.0);
    }
}

TEST_CASE("perturbed example: small strengths give branches near the linear ones") {
  auto params = PerturbedExampleParams::reference();
  params.pitchfork_strength = 1e-8;
  params.rotation_angles = {1e-8};
  auto f = build_perturbed_example(params);
  LinearExpandingMap base(params.base);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    TorusPoint y = random_point(rng, 2);
    if (trial < 10) y = translate(params.p, Vec::Constant(2, 0.02 * (trial - 5)));
    const auto a = f->inverse_branch_points(y);
    const auto b = base.inverse_branch_points(y);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(torus_distance(a[i], b[i]) < 1e-6);
  }
}

TEST_CASE("perturbed example: equal to the base outside supports") {
  auto f = reference_example();
  LinearExpandingMap base(f->params().base);
  int outside = 0;
  for (int i = 0; i < 128; ++i)
    for (int j = 0; j < 128; ++j) {
      const TorusPoint x{i / 128.0, j / 128.0};
      if (f->in_support(x)) continue;
      ++outside;
      CHECK(torus_distance(f->evaluate(x), base.evaluate(x)) < 1e-12);
    }
  CHECK(outside > 12000);
}

TEST_CASE("perturbed example: volume expansion on a 512 grid") {
  auto params = PerturbedExampleParams::reference();
  params.volume_grid = 512;
  auto f = build_perturbed_example(params);
  CHECK(f->sigma() > 1.0);
  // Independent recomputation of the grid minimum.
  double sigma = 1e300;
  for (int i = 0; i < 512; ++i)
    for (int j = 0; j < 512; ++j) sigma = std::min(sigma, f->derivative(TorusPoint{i / 512.0, j / 512.0}).determinant());
  CHECK(sigma == doctest::Approx(f->sigma()).epsilon(1e-12));
}

TEST_CASE("perturbed example: local forms at p and q") {
  auto f = reference_example();
  const TorusPoint p = f->params().p;
  CHECK(torus_distance(f->evaluate(p), p) < 1e-14);
  auto moduli = eigenvalue_moduli(f->derivative(p));
  CHECK(moduli[0] > 1.0);
  CHECK(moduli[1] < 1.0);
  const TorusPoint q = f->params().q_sites[0];
  CHECK(torus_distance(f->evaluate(q), q) < 1e-14);
  const Mat dq = derivative_cocycle(*f, q, 1);
  CHECK(has_complex_pair(dq));
  moduli = eigenvalue_moduli(dq);
  CHECK(moduli[1] > 1.0);
}

TEST_CASE("perturbed example: constraint violations") {
  auto params = PerturbedExampleParams::reference();
  params.q_sites = {TorusPoint{0.4, 0.4}};
  CHECK_THROWS_AS(build_perturbed_example(params), Error);  // not fixed by E

  params = PerturbedExampleParams::reference();
  params.rotation_radius = 0.36;
  CHECK_THROWS_AS(build_perturbed_example(params), Error);  // q ball meets U0

  params = PerturbedExampleParams::reference();
  params.pitchfork_strength = 4.5;
  CHECK_THROWS_AS(build_perturbed_example(params), Error);  // folds: det changes sign

  params = PerturbedExampleParams::reference();
  params.u0_radius = 0.02;
  params.pitchfork_radius = 0.15;
  CHECK_NOTHROW(build_perturbed_example(params));
}

TEST_CASE("iterated map composes branches") {
  auto f = reference_example();
  IteratedMap g(f, 2);
  CHECK(g.degree() == 256);
  Rng rng(4);
  const TorusPoint y = random_point(rng, 2);
  const auto pre = g.inverse_branch_points(y);
  REQUIRE(pre.size() == 256);
  for (const auto& w : pre) CHECK(torus_distance(g.evaluate(w), y) < 1e-9);
  const TorusPoint w = random_point(rng, 2);
  Vec d(2);
  d << 0.003, -0.002;
  const TorusPoint z = g.local_inverse(w, translate(g.evaluate(w), d));
  CHECK(torus_distance(g.evaluate(z), translate(g.evaluate(w), d)) < 1e-10);
  CHECK(torus_distance(z, w) < 0.01);
}

TEST_CASE("JSON descriptors round trip") {
  std::vector<MapPtr> maps{
      std::make_shared<DoublingFamilyMap>(2),
      std::make_shared<DoublingFamilyMap>(3, DoublingFamilyMap::Bump{0.4, 0.15, -1.5}),
      std::make_shared<LinearExpandingMap>(mat2(3, 1, 1, 2)),
      std::make_shared<LinearMap>(mat2(2, 1, 1, 1)),
      reference_example(),
      std::make_shared<IteratedMap>(std::make_shared<DoublingFamilyMap>(2), 6),
  };
  for (const auto& f : maps) {
    const auto j = f->descriptor();
    const auto g = make_map(j);
    CHECK(g->descriptor() == j);
    const TorusPoint x = TorusPoint(Vec::Constant(f->dimension(), 0.3137));
    CHECK(torus_distance(f->evaluate(x), g->evaluate(x)) == 0.0);
  }
  CHECK_THROWS_AS(make_map(nlohmann::json{{"family", "nope"}}), Error);
  CHECK_THROWS_AS(make_map(nlohmann::json{{"family", "linear"}}), Error);
}
