#include <doctest.h>

#include <cmath>
#include <numbers>

#include "torusdyn/ergodic_stats.hpp"
#include "torusdyn/errors.hpp"

using namespace torusdyn;

namespace {

std::shared_ptr<const InducedMarkovMap> doubling_induced(int max_R, std::size_t budget) {
  MapPtr f = std::make_shared<DoublingFamilyMap>(2);
  auto data = compute_source_zooming_data(*f, make_periodic_orbit(*f, TorusPoint{0.0}, 1), 0.125);
  auto base = build_base(*f, data, data.delta / 8.0);
  InducedOptions opt;
  opt.max_R = max_R;
  opt.cell_budget = budget;
  return std::make_shared<const InducedMarkovMap>(build_induced_map(f, base, ZoomingContraction{0.125}, opt));
}

}  // namespace

TEST_CASE("Lyapunov exponents of linear maps") {
  LinearExpandingMap two(IntMat{{2, 0}, {0, 2}});
  auto est = lyapunov_exponents(two, lebesgue_sampler(2), 200, 8, 1);
  REQUIRE(est.exponents.size() == 2);
  CHECK(std::abs(est.exponents[0] - std::log(2.0)) < 1e-12);
  CHECK(std::abs(est.exponents[1] - std::log(2.0)) < 1e-12);

  LinearExpandingMap diag(IntMat{{3, 0}, {0, 2}});
  auto d = lyapunov_exponents(diag, lebesgue_sampler(2), 500, 4, 2);
  CHECK(std::abs(d.exponents[0] - std::log(3.0)) < 1e-8);
  CHECK(std::abs(d.exponents[1] - std::log(2.0)) < 1e-8);

  // Symmetric: exponents are the logs of the eigenvalues (5 +- sqrt 5) / 2;
  // the frame transient decays like 1/n.
  LinearExpandingMap sym(IntMat{{3, 1}, {1, 2}});
  auto s = lyapunov_exponents(sym, lebesgue_sampler(2), 20000, 4, 3);
  CHECK(std::abs(s.exponents[0] - std::log((5.0 + std::sqrt(5.0)) / 2.0)) < 1e-3);
  CHECK(std::abs(s.exponents[1] - std::log((5.0 - std::sqrt(5.0)) / 2.0)) < 1e-3);
  CHECK(s.exponents[0] + s.exponents[1] == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK_THROWS_AS(lyapunov_exponents(sym, lebesgue_sampler(2), 99, 4, 3), Error);
}

TEST_CASE("Lyapunov exponent of the doubling map") {
  DoublingFamilyMap doubling(2);
  auto est = lyapunov_exponents(doubling, lebesgue_sampler(1), 1000000, 1, 4);
  CHECK(std::abs(est.exponents[0] - std::log(2.0)) < 0.005 * std::log(2.0));
}

TEST_CASE("exponent sum matches the Jacobian average on the perturbed example") {
  auto f = build_perturbed_example(PerturbedExampleParams::reference());
  auto est = lyapunov_exponents(*f, lebesgue_sampler(2), 400, 64, 5);
  const double sum = est.exponents[0] + est.exponents[1];
  CHECK(std::abs(sum - est.log_det_average) <= 2.0 * est.log_det_std_error + 1e-9);
  CHECK(sum >= std::log(f->sigma()) - 1e-9);
  CHECK(est.exponents[0] >= est.exponents[1]);
}

TEST_CASE("correlations of the doubling map under Lebesgue") {
  DoublingFamilyMap doubling(2);
  auto x = observable_from_name("centered_x");
  auto curve = correlation_decay(doubling, lebesgue_sampler(1), x, x, 12, 1000000, 6);
  CHECK(curve.correlations[0] == doctest::Approx(1.0 / 12.0).epsilon(0.01));
  for (std::size_t k = 1; k <= 5; ++k) {
    CHECK(std::abs(curve.correlations[k] - std::pow(2.0, -static_cast<double>(k)) / 12.0) < 4.0 * curve.std_errors[k]);
  }
  REQUIRE(curve.fit_lags.size() >= 4);
  CHECK(std::abs(curve.fit.slope + std::log(2.0)) < 0.1 * std::log(2.0));
  CHECK(curve.fit.r_squared > 0.95);

  // cos 2 pi x is orthogonal to every cos 2 pi 2^k x: no usable lag.
  auto c = observable_from_name("cos_2pi_x");
  try {
    correlation_decay(doubling, lebesgue_sampler(1), c, c, 10, 200000, 7);
    FAIL("expected SignalBelowNoise");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SignalBelowNoise);
  }
  auto raw = estimate_correlations(doubling, lebesgue_sampler(1), c, c, 10, 200000, 7);
  CHECK(raw.signal_below_noise);
  CHECK(raw.correlations[0] == doctest::Approx(0.5).epsilon(0.02));
  CHECK_THROWS_AS(correlation_decay(doubling, lebesgue_sampler(1), c, c, 7, 1000, 7), Error);
  CHECK_THROWS_AS(observable_from_name("zeta"), Error);
}

TEST_CASE("bootstrap errors shrink like one over root n") {
  DoublingFamilyMap doubling(2);
  auto x = observable_from_name("centered_x");
  auto a = estimate_correlations(doubling, lebesgue_sampler(1), x, x, 4, 100000, 8);
  auto b = estimate_correlations(doubling, lebesgue_sampler(1), x, x, 4, 200000, 8);
  for (std::size_t k = 0; k <= 4; ++k) {
    CHECK(a.std_errors[k] / b.std_errors[k] == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
  }
}

TEST_CASE("return-time tail fits") {
  auto F = doubling_induced(8, 800);
  auto geo = make_weights(*F, WeightFamily::Geometric, 0.5);
  auto fit = tail_decay_fit(*F, geo, 8);
  REQUIRE(fit.tails.size() == 8);
  CHECK(fit.tails[0] == 1.0);
  // Direct summation: nu_a(R >= n) = (theta^n - theta^9) / (theta - theta^9).
  for (int n = 1; n <= 8; ++n) {
    CHECK(fit.tails[static_cast<std::size_t>(n - 1)] ==
          doctest::Approx((std::pow(0.5, n) - std::pow(0.5, 9)) / (0.5 - std::pow(0.5, 9))).epsilon(1e-12));
  }
  CHECK(fit.fit.r_squared > 0.99);
  CHECK(fit.fit.slope < -std::log(2.0) * 0.9);

  auto uni = tail_decay_fit(*F, make_weights(*F, WeightFamily::Uniform), 8);
  CHECK(uni.fit.r_squared_defined);
  CHECK(uni.tails[1] == doctest::Approx(static_cast<double>(F->size() - 1) / F->size()));

  auto single = doubling_induced(1, 4);
  auto step = tail_decay_fit(*single, make_weights(*single, WeightFamily::Uniform), 3);
  CHECK(step.tails == std::vector<double>{1.0, 0.0, 0.0});
  CHECK_FALSE(step.fit.r_squared_defined);
}

TEST_CASE("expanding-measure exponent under mu_a") {
  auto F = doubling_induced(5, 320);
  auto measure = make_tower_measure(F, make_weights(*F, WeightFamily::Geometric, 0.5));
  auto est = lyapunov_exponents(*F->map, mu_a_sampler(measure), 200, 256, 9);
  CHECK(est.exponents[0] > std::log(8.0) / F->ell());
}
