#pragma once

#include <optional>
#include <string>
#include <vector>

#include "torusdyn/dynamics.hpp"
#include "torusdyn/errors.hpp"
#include "torusdyn/orbit_analysis.hpp"

namespace torusdyn {

inline constexpr double kSampleTol = 1e-9;

// alpha_n(r) = rate^n r.
struct ZoomingContraction {
  double rate = 0.125;

  double apply(int n, double r) const;
  // sum_{n >= 1} alpha_n(r) = r rate / (1 - rate); infinite for rate >= 1.
  double series_sum(double r) const;
};

struct AxiomReport {
  std::size_t samples = 0;       // (r, n, m) triples checked
  double strict_margin = 0.0;    // min of 1 - alpha_n(r) / r
  double monotone_margin = 0.0;  // min of alpha_n(r') - alpha_n(r) over r < r'
  double submult_margin = 0.0;   // min of alpha_{n+m}(r) - alpha_n(alpha_m(r)), relative
  double series_sup = 0.0;       // sup over sampled r of the series
  double series_partial_max_error = 0.0;  // |partial sums - closed form|, relative
};

// Checks the four axioms on a grid x grid x grid sample of (r, n, m) with
// r in (0, 1], n, m in 1..grid. Throws AxiomViolation naming the axiom and
// the witness.
AxiomReport check_zooming_axioms(const ZoomingContraction& alpha, int grid = 10);

// ---------------------------------------------------------------------------

struct SourceZoomingData {
  PeriodicOrbit source;
  std::vector<TorusPoint> orbit;  // the gamma points of the source orbit
  int gamma = 1;
  int n0 = 0;
  int ell = 0;                    // n0 * gamma
  double delta = 0.0;
  double branch_contraction = 0.0;  // max over samples of |(Df^ell)^{-1}| along the fixing branch
  double sampled_ratio = 0.0;       // max pairwise distance ratio of the fixing branch on samples
  double min_block_log_conorm = 0.0;  // min over orbit of log conorm(Df^{n0 gamma})
  double lambda0 = 0.0;           // log 16
  double lambda1 = 0.0;           // log 8
  int horizon = 0;                // n0..n0+horizon checked for the log 32 bound
  TorusPoint representative;      // orbit point used as the base center
};

// Smallest n0 with log conorm(Df^{n gamma}(q)) > log 32 for every orbit point
// q and n in [n0, n0 + horizon]; then the largest delta <= delta_search for
// which the ell-step branches fixing the orbit are 1/16-contractions on
// B_delta(q) (halving to locate a working radius, then bisection). Throws
// NotASource or DeltaNotFound (radius fell below 1e-6).
SourceZoomingData compute_source_zooming_data(const DynamicalMap& f, const PeriodicOrbit& source, double delta_search,
                                              int horizon = 20);

// ---------------------------------------------------------------------------

// Pulls y back along the branch through `chain` (chain[j+1] ~ f(chain[j]),
// f(chain.back()) near y) and returns all intermediate points z_0..z_n with
// z_n = y.
std::vector<TorusPoint> pull_back_along(const DynamicalMap& f, const std::vector<TorusPoint>& chain, const TorusPoint& y);

struct ZoomingCertificate {
  TorusPoint point;
  int time = 0;
  double delta = 0.0;
  std::vector<TorusPoint> chain;  // x, f(x), ..., f^{n-1}(x): the branch representation of V_n
  double contraction_margin = 0.0;  // min over pairs and j of 1 - d_j / alpha_{n-j}(d_n)
  double preball_diameter = 0.0;    // sampled diameter of V_n(x)
  std::size_t pairs = 0;
};

struct ZoomingWitness {
  TorusPoint a, b;  // the pair at time n
  int j = 0;        // time at which the inequality failed
  double distance = 0.0;
  double bound = 0.0;
};

struct ZoomingVerdict {
  std::optional<ZoomingCertificate> certificate;
  std::optional<ErrorCode> refusal;  // BranchUndefined or ContractionFailed
  std::string reason;
  std::optional<ZoomingWitness> witness;

  bool is_zooming() const { return certificate.has_value(); }
};

// Certifies n as an (alpha, delta)-zooming time for x: builds the inverse
// branch of f^n along the orbit on B_delta(f^n x) and checks
// d(f^j a, f^j b) <= alpha_{n-j}(d(f^n a, f^n b)) + kSampleTol for 32 n
// deterministic sample pairs and every 0 <= j < n.
ZoomingVerdict is_zooming_time(const DynamicalMap& f, const TorusPoint& x, int n, const ZoomingContraction& alpha,
                               double delta);
// Same check with the branch given explicitly by its chain of reference points
// (chain.size() = n, ball centered at `center`).
ZoomingVerdict is_zooming_time_along(const DynamicalMap& f, const std::vector<TorusPoint>& chain, const TorusPoint& center,
                                     const ZoomingContraction& alpha, double delta);

struct ZoomingFrequency {
  double frequency = 0.0;        // fraction of j in 1..n_max that are zooming times
  std::vector<double> running;   // running[k] = fraction over 1..k+1
  std::vector<int> zooming_times;
};

ZoomingFrequency zooming_frequency(const DynamicalMap& f, const TorusPoint& x, const ZoomingContraction& alpha,
                                   double delta, int n_max, int threads = 0);

}  // namespace torusdyn
