#include "torusdyn/tower_measures.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

#include "torusdyn/errors.hpp"
#include "torusdyn/numeric.hpp"
#include "torusdyn/random.hpp"

namespace torusdyn {

const char* to_string(WeightFamily family) {
  switch (family) {
    case WeightFamily::Geometric: return "geometric";
    case WeightFamily::Uniform: return "uniform";
  }
  return "unknown";
}

WeightFamily weight_family_from_string(const std::string& name) {
  if (name == "geometric") return WeightFamily::Geometric;
  if (name == "uniform") return WeightFamily::Uniform;
  throw Error(ErrorCode::BadParam, "unknown weight family '" + name + "'");
}

BernoulliWeights make_weights(const InducedMarkovMap& F, WeightFamily family, double param) {
  if (F.cells.empty()) throw Error(ErrorCode::EmptyPartition, "induced map has no cells");
  BernoulliWeights w;
  w.family = family;
  w.param = param;
  std::vector<double> raw(F.cells.size());
  if (family == WeightFamily::Geometric) {
    if (!(param > 0.0 && param < 1.0)) throw Error(ErrorCode::BadParam, "geometric theta must lie in (0, 1)");
    std::map<int, std::size_t> count;
    for (const auto& c : F.cells) ++count[c.return_time];
    for (std::size_t i = 0; i < F.cells.size(); ++i) {
      const int R = F.cells[i].return_time;
      raw[i] = std::pow(param, R) / static_cast<double>(count[R]);
    }
    w.discarded_mass = std::pow(param, F.max_R);
    w.summability = "sum over cells with R = k of a_P <= C theta^k, theta = " + std::to_string(param) + " < 1";
  } else {
    std::fill(raw.begin(), raw.end(), 1.0);
    w.discarded_mass = std::max(0.0, 1.0 - F.lebesgue_coverage);
    w.summability = "finite partition: sum a_P R(P) <= max_R";
  }
  const double total = pairwise_sum(raw);
  w.a.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) w.a[i] = raw[i] / total;
  return w;
}

double cylinder_measure(const BernoulliWeights& w, std::span<const int> itinerary) {
  double m = 1.0;
  for (int id : itinerary) {
    if (id < 0 || static_cast<std::size_t>(id) >= w.a.size()) {
      throw Error(ErrorCode::UnknownCell, "no cell with id " + std::to_string(id), id);
    }
    m *= w.a[static_cast<std::size_t>(id)];
  }
  return m;
}

double preimage_cylinder_measure(const BernoulliWeights& w, std::span<const int> itinerary) {
  std::vector<int> extended(itinerary.size() + 1);
  std::copy(itinerary.begin(), itinerary.end(), extended.begin() + 1);
  std::vector<double> terms(w.a.size());
  for (std::size_t p = 0; p < w.a.size(); ++p) {
    extended[0] = static_cast<int>(p);
    terms[p] = cylinder_measure(w, extended);
  }
  return pairwise_sum(terms);
}

namespace {

std::vector<double> cumulative(const std::vector<double>& weights) {
  std::vector<double> cdf(weights.size());
  // Running sum in a fixed order.
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  for (auto& v : cdf) v /= acc;
  cdf.back() = 1.0;
  return cdf;
}

std::size_t draw(const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

Vec uniform_in_ball(Rng& rng, int n, double r) {
  if (n == 1) return Vec::Constant(1, r * (2.0 * rng.uniform() - 1.0));
  while (true) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = r * (2.0 * rng.uniform() - 1.0);
    if (v.norm() < r) return v;
  }
}

}  // namespace

double TowerMeasure::selection_probability(int id) const {
  const auto& cell = induced->cell(id);
  return weights.a[static_cast<std::size_t>(id)] * cell.return_time / mean_return;
}

TowerMeasure make_tower_measure(std::shared_ptr<const InducedMarkovMap> F, BernoulliWeights weights, int cascade_depth) {
  if (!F) throw Error(ErrorCode::InvalidArgument, "null induced map");
  if (F->cells.empty()) throw Error(ErrorCode::EmptyPartition, "induced map has no cells");
  if (weights.a.size() != F->cells.size()) throw Error(ErrorCode::InvalidArgument, "one weight per cell required");
  if (cascade_depth < 1) throw Error(ErrorCode::InvalidArgument, "cascade_depth must be >= 1");
  TowerMeasure m;
  m.induced = std::move(F);
  m.weights = std::move(weights);
  m.ell = m.induced->ell();
  m.cascade_depth = cascade_depth;
  std::vector<double> kac(m.weights.a.size());
  for (std::size_t i = 0; i < kac.size(); ++i) kac[i] = m.weights.a[i] * m.induced->cells[i].return_time;
  m.mean_return = pairwise_sum(kac);
  if (!(m.mean_return > 0.0) || !std::isfinite(m.mean_return)) {
    throw Error(ErrorCode::InvalidArgument, "mean return time must be finite and positive");
  }
  m.selection_cdf = cumulative(kac);
  return m;
}

MuSample sample_mu_a(const TowerMeasure& measure, std::size_t n_samples, std::uint64_t seed, int threads) {
  const InducedMarkovMap& F = *measure.induced;
  const DynamicalMap& f = *F.map;
  const auto weight_cdf = cumulative(measure.weights.a);
  MuSample out;
  out.points.resize(n_samples);
  out.cells.resize(n_samples);
  constexpr std::size_t kChunk = 8192;
  const std::size_t chunks = (n_samples + kChunk - 1) / kChunk;
  parallel_for(chunks, threads > 0 ? threads : default_threads(), [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t end = std::min(n_samples, (c + 1) * kChunk);
    for (std::size_t s = c * kChunk; s < end; ++s) {
      const std::size_t p = draw(measure.selection_cdf, rng.uniform());
      std::vector<std::size_t> cascade;
      for (int d = 1; d < measure.cascade_depth; ++d) cascade.push_back(draw(weight_cdf, rng.uniform()));
      TorusPoint y = translate(F.base.center, uniform_in_ball(rng, f.dimension(), F.base.r));
      for (auto it = cascade.rbegin(); it != cascade.rend(); ++it) y = cell_pull_back(f, F.cells[*it], y);
      const MarkovCell& cell = F.cells[p];
      const auto trail = pull_back_along(f, cell.chain, y);
      const std::uint64_t j = rng.below(static_cast<std::uint64_t>(cell.return_time));
      const std::uint64_t i = rng.below(static_cast<std::uint64_t>(measure.ell));
      out.points[s] = trail[static_cast<std::size_t>(i + measure.ell * j)];
      out.cells[s] = static_cast<int>(p);
    }
  });
  return out;
}

Estimate mean_with_error(std::span<const double> values, std::uint64_t seed) {
  Estimate e;
  e.n_samples = values.size();
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "no values to average");
  e.value = pairwise_mean(values);
  const std::size_t n = values.size();
  const std::size_t B = std::min<std::size_t>(64, n);
  if (B < 2) return e;
  std::vector<double> sums(B), counts(B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t lo = b * n / B, hi = (b + 1) * n / B;
    sums[b] = pairwise_sum(values.subspan(lo, hi - lo));
    counts[b] = static_cast<double>(hi - lo);
  }
  Rng rng(derive_seed(seed, 0xb0075ULL));
  constexpr int kResamples = 400;
  std::vector<double> means(kResamples);
  std::vector<double> s(B), c(B);
  for (int k = 0; k < kResamples; ++k) {
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t pick = rng.below(B);
      s[b] = sums[pick];
      c[b] = counts[pick];
    }
    means[k] = pairwise_sum(s) / pairwise_sum(c);
  }
  const double mu = pairwise_mean(means);
  std::vector<double> sq(kResamples);
  for (int k = 0; k < kResamples; ++k) sq[k] = (means[k] - mu) * (means[k] - mu);
  e.std_error = std::sqrt(pairwise_sum(sq) / (kResamples - 1));
  return e;
}

Estimate integrate(const TowerMeasure& measure, const Observable& observable, std::size_t n_samples, std::uint64_t seed,
                   int threads) {
  if (n_samples == 0) throw Error(ErrorCode::InvalidArgument, "n_samples must be positive");
  const auto sample = sample_mu_a(measure, n_samples, seed, threads);
  std::vector<double> values(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) values[i] = observable(sample.points[i]);
  Estimate e = mean_with_error(values, seed);
  e.systematic_error = measure.weights.discarded_mass;
  return e;
}

ChiSquareResult chi_square_test(std::span<const std::size_t> counts, std::span<const double> probabilities) {
  if (counts.size() != probabilities.size() || counts.empty()) {
    throw Error(ErrorCode::InvalidArgument, "counts and probabilities must have the same non-zero length");
  }
  double n = 0.0;
  for (auto c : counts) n += static_cast<double>(c);
  std::vector<double> obs, exp;
  double o = 0.0, e = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    o += static_cast<double>(counts[i]);
    e += probabilities[i] * n;
    if (e >= 5.0) {
      obs.push_back(o);
      exp.push_back(e);
      o = e = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    if (exp.empty()) {
      obs.push_back(o);
      exp.push_back(e);
    } else {
      obs.back() += o;
      exp.back() += e;
    }
  }
  ChiSquareResult r;
  r.bins = obs.size();
  std::vector<double> terms(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) terms[i] = (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  r.statistic = pairwise_sum(terms);
  r.dof = static_cast<int>(obs.size()) - 1;
  if (r.dof < 1) {
    r.p_value = 1.0;
    return r;
  }
  boost::math::chi_squared dist(r.dof);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

ChiSquareResult kac_marginal_test(const TowerMeasure& measure, std::span<const int> drawn_cells) {
  const std::size_t n = measure.weights.a.size();
  std::vector<std::size_t> counts(n, 0);
  for (int id : drawn_cells) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) throw Error(ErrorCode::UnknownCell, "drawn cell out of range", id);
    ++counts[static_cast<std::size_t>(id)];
  }
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = measure.selection_probability(static_cast<int>(i));
  return chi_square_test(counts, probs);
}

}  // namespace torusdyn
