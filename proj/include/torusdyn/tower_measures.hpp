#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "torusdyn/induced_markov.hpp"

namespace torusdyn {

enum class WeightFamily { Geometric, Uniform };

const char* to_string(WeightFamily family);
WeightFamily weight_family_from_string(const std::string& name);

struct BernoulliWeights {
  std::vector<double> a;      // indexed by cell id, sums to 1
  WeightFamily family = WeightFamily::Geometric;
  double param = 0.0;         // theta for the geometric family
  // Mass the untruncated family puts beyond the truncation horizon: theta^max_R
  // for the geometric family, the uncovered Lebesgue fraction for the uniform one.
  double discarded_mass = 0.0;
  std::string summability;    // proof obligation of the untruncated family
};

// Geometric: a_P proportional to theta^R(P) / #{Q : R(Q) = R(P)}, theta in (0, 1).
// Uniform: a_P = 1 / #cells. Throws EmptyPartition and BadParam.
BernoulliWeights make_weights(const InducedMarkovMap& F, WeightFamily family, double param = 0.5);

// nu_a of the cylinder P_0 cap F^-1 P_1 cap ...: the product of the weights.
// Throws UnknownCell.
double cylinder_measure(const BernoulliWeights& w, std::span<const int> itinerary);
// nu_a(F^-1 C) = sum over P of nu_a([P] + C).
double preimage_cylinder_measure(const BernoulliWeights& w, std::span<const int> itinerary);

struct TowerMeasure {
  std::shared_ptr<const InducedMarkovMap> induced;
  BernoulliWeights weights;
  int ell = 1;
  double mean_return = 0.0;   // sum a_P R(P)
  int cascade_depth = 3;      // cells drawn before the uniform draw on Delta
  std::vector<double> selection_cdf;  // cumulative a_P R(P) / mean_return

  // Probability that the sampler starts in cell P.
  double selection_probability(int id) const;
};

TowerMeasure make_tower_measure(std::shared_ptr<const InducedMarkovMap> F, BernoulliWeights weights, int cascade_depth = 3);

struct MuSample {
  std::vector<TorusPoint> points;
  std::vector<int> cells;   // the cell P each point was drawn from
};

// Draws from mu_a: P with probability a_P R(P) / mean_return, x in P as the
// pull-back of a uniform point of Delta through cascade_depth - 1 further
// cells drawn from a and then through P, j uniform in [0, R(P)), i uniform in
// [0, ell); returns f^{i + ell j}(x), read off the pulled-back trail.
// Deterministic in the seed for any thread count.
MuSample sample_mu_a(const TowerMeasure& measure, std::size_t n_samples, std::uint64_t seed, int threads = 0);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  double systematic_error = 0.0;  // discarded tail mass of the weight family
  std::size_t n_samples = 0;
};

// Mean and batch-bootstrap standard error of values (64 contiguous batches,
// 400 resamples seeded by `seed`).
Estimate mean_with_error(std::span<const double> values, std::uint64_t seed);

using Observable = std::function<double(const TorusPoint&)>;

Estimate integrate(const TowerMeasure& measure, const Observable& observable, std::size_t n_samples, std::uint64_t seed,
                   int threads = 0);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
  std::size_t bins = 0;
};

// Pearson test of observed counts against expected probabilities; adjacent
// categories are pooled until every bin expects at least 5 draws.
ChiSquareResult chi_square_test(std::span<const std::size_t> counts, std::span<const double> probabilities);

// Kac marginal test: cells drawn by the sampler against a_P R(P) / mean_return.
ChiSquareResult kac_marginal_test(const TowerMeasure& measure, std::span<const int> drawn_cells);

}  // namespace torusdyn
