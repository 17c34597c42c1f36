#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "torusdyn/errors.hpp"
#include "torusdyn/orbit_analysis.hpp"

using namespace torusdyn;

namespace {

IntMat diag2(long long a) {
  IntMat m(2, 2);
  m << a, 0, 0, a;
  return m;
}

std::shared_ptr<const PerturbedExampleMap> reference_example() {
  static auto map = build_perturbed_example(PerturbedExampleParams::reference());
  return map;
}

bool close(double a, double b) { return std::abs(a - b) < 1e-12; }

}  // namespace

TEST_CASE("forward orbit density examples") {
  DoublingFamilyMap doubling(2);
  // The double nearest the golden ratio is dyadic: its orbit dies at 0 after
  // 53 steps, before the 0.05 covering is reached.
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  auto r = forward_orbit_density(doubling, TorusPoint{golden}, 10000, 0.05);
  CHECK_FALSE(r.dense);
  // With 100 exact decimal digits the orbit follows the irrational one for
  // about 330 steps.
  const std::string golden_digits =
      "0.6180339887498948482045868343656381177203091798057628621354486227052604628189024497072072041893911374";
  r = forward_orbit_density_exact(doubling, {golden_digits}, 10000, 0.05);
  CHECK(r.dense);
  REQUIRE(r.first_n.has_value());
  CHECK(*r.first_n > 50);
  CHECK(*r.first_n < 330);
  CHECK_THROWS_AS(forward_orbit_density_exact(DoublingFamilyMap(2, DoublingFamilyMap::Bump{0.5, 0.1, 0.5}), {golden_digits}, 10, 0.05), Error);

  r = forward_orbit_density(doubling, TorusPoint{0.0}, 100, 0.4);
  CHECK_FALSE(r.dense);
  CHECK_FALSE(r.first_n.has_value());

  r = forward_orbit_density(doubling, TorusPoint{0.3}, 5, 0.5 + 0.01);
  CHECK(r.dense);
  CHECK(*r.first_n == 0);
  LinearExpandingMap twice(diag2(2));
  r = forward_orbit_density(twice, TorusPoint{0.3, 0.1}, 5, std::sqrt(2.0) / 2 + 0.01);
  CHECK(*r.first_n == 0);
}

TEST_CASE("forward orbit first_n is non-decreasing as eps shrinks") {
  DoublingFamilyMap tripling(3);
  const TorusPoint x{0.1234567};
  int last = 0;
  for (double eps : {0.3, 0.2, 0.1, 0.07, 0.05, 0.03}) {
    auto r = forward_orbit_density(tripling, x, 5000, eps);
    if (!r.dense) break;
    CHECK(*r.first_n >= last);
    last = *r.first_n;
  }
}

TEST_CASE("pre-orbit tree examples") {
  DoublingFamilyMap doubling(2);
  auto tree = build_preorbit_tree(doubling, TorusPoint{0.0}, 3, 1000);
  REQUIRE(tree.levels.size() == 4);
  for (int d = 1; d <= 3; ++d) {
    std::vector<double> got;
    for (const auto& p : tree.levels[d]) got.push_back(p[0]);
    std::sort(got.begin(), got.end());
    REQUIRE(got.size() == (1u << d));
    for (int k = 0; k < (1 << d); ++k) CHECK(got[k] == std::ldexp(k, -d));
  }

  tree = build_preorbit_tree(doubling, TorusPoint{1.0 / 3.0}, 2, 1000);
  REQUIRE(tree.levels[1].size() == 2);
  CHECK(close(tree.levels[1][0][0], 1.0 / 6));
  CHECK(close(tree.levels[1][1][0], 2.0 / 3));
  const double expect[] = {1.0 / 12, 7.0 / 12, 1.0 / 3, 5.0 / 6};
  REQUIRE(tree.levels[2].size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(close(tree.levels[2][i][0], expect[i]));

  // Applying f to level j gives level j-1.
  for (std::size_t i = 0; i < tree.levels[2].size(); ++i)
    CHECK(torus_distance(doubling.evaluate(tree.levels[2][i]), tree.levels[1][i / 2]) < 1e-10);
}

TEST_CASE("pre-orbit tree budget") {
  LinearExpandingMap four(diag2(4));
  try {
    build_preorbit_tree(four, TorusPoint{0.1, 0.2}, 5, 1000000);
    FAIL("expected BudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BudgetExceeded);
    CHECK(e.detail() == 4);
  }
  auto tree = build_preorbit_tree(four, TorusPoint{0.1, 0.2}, 3, 5000);
  CHECK(tree.levels[3].size() == 4096);
}

TEST_CASE("pre-orbit density certificate examples") {
  DoublingFamilyMap doubling(2);
  auto cert = preorbit_density_certificate(doubling, TorusPoint{0.0}, std::ldexp(1.0, -9), 10, 1u << 20);
  // Levels up to 9 are the multiples of 2^-9, whose covering radius 2^-10 is
  // already below eps.
  CHECK(cert.dense);
  CHECK(cert.depth_used == 9);
  cert = preorbit_density_certificate(doubling, TorusPoint{0.0}, std::ldexp(1.0, -11), 10, 1u << 20);
  CHECK_FALSE(cert.dense);
  CHECK(cert.depth_used == 10);
  try {
    preorbit_density_certificate(doubling, TorusPoint{0.0}, std::ldexp(1.0, -11), 10, 100);
    FAIL("expected Inconclusive");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Inconclusive);
  }
  CHECK_THROWS_AS(preorbit_density_certificate(doubling, TorusPoint{0.0}, 0.0, 10, 100), Error);
}

TEST_CASE("pre-orbit certificate is monotone in eps") {
  LinearExpandingMap f(diag2(3));
  const TorusPoint x{0.21, 0.77};
  int last_depth = 1 << 20;
  bool certified = false;
  for (double eps : {0.03, 0.04, 0.06, 0.09, 0.15, 0.3}) {
    auto cert = preorbit_density_certificate(f, x, eps, 8, 1u << 24);
    if (certified) {
      CHECK(cert.dense);
      CHECK(cert.depth_used <= last_depth);
    }
    if (cert.dense) {
      certified = true;
      last_depth = cert.depth_used;
    }
  }
  CHECK(certified);
}

TEST_CASE("periodic points of the doubling map") {
  DoublingFamilyMap doubling(2);
  auto s = find_periodic_points(doubling, 1, 8);
  REQUIRE(s.orbits.size() == 1);
  CHECK(s.orbits[0].point[0] == 0.0);
  CHECK(s.orbits[0].multiplier(0, 0) == 2.0);
  CHECK(s.orbits[0].classification == Classification::Source);

  s = find_periodic_points(doubling, 2, 16);
  REQUIRE(s.orbits.size() == 3);
  CHECK(close(s.orbits[0].point[0], 0.0));
  CHECK(close(s.orbits[1].point[0], 1.0 / 3));
  CHECK(close(s.orbits[2].point[0], 2.0 / 3));
  for (const auto& o : s.orbits) {
    CHECK(o.multiplier(0, 0) == 4.0);
    CHECK(o.classification == Classification::Source);
  }

  // Analytic count 2^k - 1 of solutions of 2^k x = x.
  for (int k = 1; k <= 10; ++k) {
    s = find_periodic_points(doubling, k, 4 << k);
    CHECK(s.orbits.size() == (1u << k) - 1);
    for (const auto& o : s.orbits) CHECK(torus_distance(iterate(doubling, o.point, k), o.point) < 1e-9);
  }
}

TEST_CASE("classification thresholds") {
  CHECK(classify({2.0, 1.5}) == Classification::Source);
  CHECK(classify({0.5, 0.2}) == Classification::Sink);
  CHECK(classify({4.0, 0.5}) == Classification::Saddle);
  CHECK(classify({4.0, 1.0 + 5e-7}) == Classification::Nonhyperbolic);
  CHECK(classify({4.0, 1.0 + 2e-6}) == Classification::Source);
}

TEST_CASE("perturbed example fixed points: saddle at p, two new sources") {
  auto f = reference_example();
  auto s = find_periodic_points(*f, 1, 64);
  CHECK(s.orbits.size() == 11);  // 9 fixed points of 4 Id, plus r1 and r2
  const TorusPoint p = f->params().p;
  int saddles = 0, near_p_sources = 0;
  for (const auto& o : s.orbits) {
    if (o.classification == Classification::Saddle) {
      ++saddles;
      CHECK(torus_distance(o.point, p) < 1e-10);
    }
    if (o.classification == Classification::Source && torus_distance(o.point, p) < f->params().pitchfork_radius) {
      ++near_p_sources;
      CHECK(torus_distance(o.point, p) > 1e-3);
    }
    CHECK(o.residual < 1e-10);
  }
  CHECK(saddles == 1);
  CHECK(near_p_sources == 2);
  auto q = std::find_if(s.orbits.begin(), s.orbits.end(), [&](const PeriodicOrbit& o) { return torus_distance(o.point, f->params().q_sites[0]) < 1e-10; });
  REQUIRE(q != s.orbits.end());
  CHECK(q->complex_pair);
  CHECK(q->classification == Classification::Source);
}

TEST_CASE("expansion off U0") {
  LinearExpandingMap twice(diag2(2));
  auto r = verify_expanding_off_U0(twice, std::nullopt, 32);
  CHECK(r.expanding);
  CHECK(r.min_conorm == doctest::Approx(2.0).epsilon(1e-14));

  auto f = reference_example();
  r = verify_expanding_off_U0(*f, f->u0(), 256);
  CHECK(r.expanding);
  CHECK(r.min_conorm > 1.0);

  // Pitchfork support pushed past a small U0: contraction leaks outside.
  auto params = PerturbedExampleParams::reference();
  params.u0_radius = 0.02;
  params.pitchfork_radius = 0.15;
  auto bad = build_perturbed_example(params);
  r = verify_expanding_off_U0(*bad, bad->u0(), 256);
  CHECK_FALSE(r.expanding);
  CHECK(r.min_conorm < 1.0);
}

TEST_CASE("internal radius growth") {
  DoublingFamilyMap doubling(2);
  // Pulled-back radius 0.2 / 2^N must fall below 0.01: N = 5.
  auto r = verify_irg(doubling, TorusPoint{1.0 / 3.0}, 20, 0.01, 0.2);
  CHECK(r.holds);
  CHECK(r.n == 5);

  LinearExpandingMap twice(diag2(2));
  for (double eps : {0.003, 0.01, 0.02}) {
    r = verify_irg(twice, TorusPoint{0.3, 0.6}, 30, eps, 0.25);
    int expected = 1;
    while (!(std::ldexp(eps, expected) > 0.25)) ++expected;
    CHECK(r.holds);
    CHECK(r.n == expected);
  }

  auto f = reference_example();
  CHECK_THROWS_AS(verify_irg(*f, f->params().p, 5, 0.01, 0.1, f->u0()), Error);
  // q is fixed, outside U0, with expansion 4 along a rotated frame.
  r = verify_irg(*f, f->params().q_sites[0], 20, 0.01, 0.1, f->u0());
  CHECK(r.holds);
  CHECK(r.n >= 2);
}

TEST_CASE("arc escape and pre-image hypotheses on the reference example") {
  auto f = reference_example();
  const Ball u1(f->u0().center(), f->u0().radius() * 1.25);
  auto arcs = sample_arc_escape(*f, f->u0(), u1, 0.1, 50, 64, 12, 42);
  CHECK_FALSE(arcs.falsified);
  CHECK(arcs.arcs_tested == 50);
  auto pre = verify_preimage_outside(*f, u1, 64);
  CHECK(pre.holds);
}

TEST_CASE("pre-orbit density of the repeller r1") {
  auto f = reference_example();
  auto s = find_periodic_points(*f, 1, 64);
  const TorusPoint p = f->params().p;
  auto r1 = std::find_if(s.orbits.begin(), s.orbits.end(), [&](const PeriodicOrbit& o) {
    return o.classification == Classification::Source && torus_distance(o.point, p) < f->params().pitchfork_radius;
  });
  REQUIRE(r1 != s.orbits.end());
  auto cert = preorbit_density_certificate(*f, r1->point, 0.05, 12, 50000000);
  CHECK(cert.dense);
  CHECK(cert.depth_used <= 12);
  MESSAGE("r1 = (" << r1->point[0] << ", " << r1->point[1] << "), depth used " << cert.depth_used);
}

TEST_CASE("exact linear orbits") {
  IntMat cat(2, 2);
  cat << 2, 1, 1, 1;
  auto orbit = exact_linear_orbit(cat, {"0.5", "0.5"}, 3);
  CHECK(orbit[1][0] == 0.5);
  CHECK(orbit[1][1] == 0.0);
  IntMat two(1, 1);
  two << 2;
  orbit = exact_linear_orbit(two, {"-0.25"}, 2);
  CHECK(orbit[0][0] == 0.75);
  CHECK(orbit[1][0] == 0.5);
  CHECK(orbit[2][0] == 0.0);
  // 1/3 in 40 decimal digits: the exact orbit of the rational stays near 1/3, 2/3.
  orbit = exact_linear_orbit(two, {"0.3333333333333333333333333333333333333333"}, 60);
  CHECK(std::abs(orbit[60][0] - 1.0 / 3.0) < 1e-20 + std::ldexp(1.0, 60) * 1e-40 * 2);
  CHECK_THROWS_AS(exact_linear_orbit(two, {"0.1x"}, 2), Error);
}
