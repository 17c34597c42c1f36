#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "torusdyn/errors.hpp"
#include "torusdyn/induced_markov.hpp"
#include "torusdyn/random.hpp"

#include "doubling_oracle.hpp"

using namespace torusdyn;
using namespace torusdyn::oracle;

namespace {

struct DoublingSetup {
  MapPtr f = std::make_shared<DoublingFamilyMap>(2);
  SourceZoomingData data = compute_source_zooming_data(*f, make_periodic_orbit(*f, TorusPoint{0.0}, 1), 0.125);
  InducedBase base = build_base(*f, data, 1.0 / 64.0);
};

}  // namespace

TEST_CASE("base radius must stay below delta/4") {
  DoublingSetup s;
  CHECK(s.base.r == 1.0 / 64.0);
  CHECK(s.base.ell == 6);
  CHECK(s.base.nested_ball_approximation);
  try {
    build_base(*s.f, s.data, s.data.delta / 4.0);
    FAIL("expected RadiusTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RadiusTooLarge);
  }
  CHECK_THROWS_AS(build_base(*s.f, s.data, 0.0), Error);
}

TEST_CASE("doubling partition matches the exact dyadic enumeration") {
  DoublingSetup s;
  InducedOptions opt;
  opt.max_R = 5;
  opt.cell_budget = 320;
  auto F = build_induced_map(s.f, s.base, ZoomingContraction{0.125}, opt);
  const auto oracle = doubling_oracle(5, 64);
  REQUIRE(F.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    const auto& c = F.cells[i];
    const auto& o = oracle[i];
    CHECK(c.return_time == o.R);
    CHECK(c.itinerary == o.itinerary);
    const double center = static_cast<double>(o.lift) / static_cast<double>(pow64(o.R));
    CHECK(torus_distance(c.center, TorusPoint{center}) <= 1e-12);
    const double radius = 1.0 / static_cast<double>(pow64(o.R + 1));
    CHECK(std::abs(c.outer_radius - radius) <= 1e-12);
    CHECK(std::abs(c.inner_radius - radius) <= 1e-12);
    CHECK(c.derivative_bound == doctest::Approx(static_cast<double>(pow64(o.R))).epsilon(1e-12));
  }
  // Level 1 is the fixing branch alone, level 2 is complete (2 * 61 cells).
  CHECK(F.levels[0].committed == 1);
  CHECK(F.levels[0].return_time == 1);
  CHECK(F.levels[1].committed == 64);
  CHECK(F.levels[1].truncated);
  CHECK(F.cells[0].itinerary == std::vector<int>(6, 0));
  CHECK(F.nu_proxy_mass == doctest::Approx(1.0 - std::pow(0.5, 5)).epsilon(1e-15));
}

TEST_CASE("uncapped second level is the full first-return set") {
  DoublingSetup s;
  InducedOptions opt;
  opt.max_R = 2;
  opt.cell_budget = 4096;
  auto F = build_induced_map(s.f, s.base, ZoomingContraction{0.125}, opt);
  const auto oracle = doubling_oracle(2, 4096);
  REQUIRE(F.size() == oracle.size());
  CHECK(F.levels[1].committed == 122);
  CHECK_FALSE(F.levels[1].truncated);
  // |P| / |Delta| = 64^-R.
  CHECK(F.lebesgue_coverage == doctest::Approx(1.0 / 64.0 + 122.0 / 4096.0).epsilon(1e-13));
}

TEST_CASE("cells are pairwise disjoint, inside Delta, and first returns") {
  DoublingSetup s;
  InducedOptions opt;
  opt.max_R = 4;
  opt.cell_budget = 200;
  auto F = build_induced_map(s.f, s.base, ZoomingContraction{0.125}, opt);
  for (std::size_t a = 0; a < F.size(); ++a) {
    const auto& A = F.cells[a];
    CHECK(torus_distance(A.center, s.base.center) + A.outer_radius < s.base.r);
    for (std::size_t b = a + 1; b < F.size(); ++b) {
      const auto& B = F.cells[b];
      CHECK(torus_distance(A.center, B.center) >= A.outer_radius + B.outer_radius);
    }
  }
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto& cell = F.cells[rng.below(F.size())];
    const TorusPoint y = translate(s.base.center, Vec::Constant(1, s.base.r * (2.0 * rng.uniform() - 1.0)));
    const auto trail = pull_back_along(*s.f, cell.chain, y);
    CHECK(s.base.ball().contains(trail.front()));
    for (int j = 1; j < cell.return_time; ++j) {
      CHECK_FALSE(s.base.ball().contains(trail[static_cast<std::size_t>(j * s.base.ell)]));
    }
  }
}

TEST_CASE("Markov property certification") {
  DoublingSetup s;
  InducedOptions opt;
  opt.max_R = 3;
  opt.cell_budget = 60;
  auto F = build_induced_map(s.f, s.base, ZoomingContraction{0.125}, opt);
  auto report = certify_markov(F, 32);
  CHECK(report.passed);
  CHECK_FALSE(report.vacuous);
  CHECK(report.cells_checked == F.size());
  CHECK(report.worst_inside_ratio < 1.0);
  CHECK(report.min_derivative_bound == 64.0);

  // The branch of x -> 64x through -1/64 straddles the boundary of Delta.
  MarkovCell broken;
  broken.id = 7;
  broken.return_time = 1;
  broken.itinerary = std::vector<int>(6, 1);
  broken.chain = itinerary_chain(*s.f, s.base.center, broken.itinerary);
  broken.center = broken.chain.front();
  broken.derivative_bound = 64.0;
  CHECK(torus_distance(broken.center, TorusPoint{-1.0 / 64.0}) < 1e-15);
  std::vector<MarkovCell> cells{broken};
  try {
    certify_markov(*s.f, s.base, cells, 32);
    FAIL("expected MarkovViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MarkovViolation);
    CHECK(e.detail() == 7);
  }

  auto empty = certify_markov(*s.f, s.base, std::vector<MarkovCell>{}, 32);
  CHECK(empty.passed);
  CHECK(empty.vacuous);
}

TEST_CASE("return-time tail") {
  DoublingSetup s;
  InducedOptions opt;
  opt.max_R = 4;
  opt.cell_budget = 100;
  auto F = build_induced_map(s.f, s.base, ZoomingContraction{0.125}, opt);
  const auto masses = lebesgue_masses(F);
  CHECK(return_time_tail(F, masses, 1) == 1.0);
  CHECK(return_time_tail(F, masses, 5) == 0.0);
  double prev = 1.0;
  for (int n = 1; n <= 5; ++n) {
    const double t = return_time_tail(F, masses, n);
    CHECK(t <= prev);
    prev = t;
  }
  std::vector<double> uniform(F.size(), 1.0);
  std::size_t at_least_two = 0;
  for (const auto& c : F.cells) at_least_two += c.return_time >= 2;
  CHECK(return_time_tail(F, uniform, 2) == doctest::Approx(static_cast<double>(at_least_two) / F.size()));
  CHECK_THROWS_AS(return_time_tail(F, std::vector<double>(3, 1.0), 1), Error);
}

TEST_CASE("search failures") {
  DoublingSetup s;
  InducedOptions opt;
  opt.max_R = 2;
  opt.cell_budget = 10;
  // Branches contract by 1/64 per block, never by 1/128.
  try {
    build_induced_map(s.f, s.base, ZoomingContraction{1.0 / 128.0}, opt);
    FAIL("expected NoCellsFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoCellsFound);
  }
  opt.node_budget = 20;
  try {
    build_induced_map(s.f, s.base, ZoomingContraction{0.125}, opt);
    FAIL("expected BudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BudgetExceeded);
  }
}

TEST_CASE("two-dimensional linear base") {
  MapPtr f = std::make_shared<LinearExpandingMap>(IntMat{{3, 1}, {1, 2}});
  auto data = compute_source_zooming_data(*f, make_periodic_orbit(*f, TorusPoint{0.0, 0.0}, 1), 0.2);
  auto base = build_base(*f, data, data.delta / 8.0);
  InducedOptions opt;
  opt.max_R = 2;
  opt.cell_budget = 40;
  auto F = build_induced_map(f, base, ZoomingContraction{0.125}, opt);
  CHECK(F.size() > 0);
  auto report = certify_markov(F, 32);
  CHECK(report.passed);
  for (const auto& c : F.cells) {
    CHECK(c.volume_fraction == doctest::Approx(std::pow(5.0, -data.ell * c.return_time)).epsilon(1e-9));
  }
}

TEST_CASE("json round trip reproduces the cells") {
  DoublingSetup s;
  InducedOptions opt;
  opt.max_R = 3;
  opt.cell_budget = 30;
  auto F = build_induced_map(s.f, s.base, ZoomingContraction{0.125}, opt);
  auto G = induced_map_from_json(to_json(F));
  REQUIRE(G.size() == F.size());
  for (std::size_t i = 0; i < F.size(); ++i) {
    CHECK(G.cells[i].itinerary == F.cells[i].itinerary);
    CHECK(G.cells[i].chain.size() == F.cells[i].chain.size());
    CHECK(torus_distance(G.cells[i].chain.back(), F.cells[i].chain.back()) == 0.0);
  }
  CHECK(to_json(G) == to_json(F));
  CHECK_THROWS_AS(induced_map_from_json(nlohmann::json{{"map", 1}}), Error);
  CHECK_THROWS_AS(F.cell(static_cast<int>(F.size())), Error);
}
