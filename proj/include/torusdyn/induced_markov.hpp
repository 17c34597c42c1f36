#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "torusdyn/dynamics.hpp"
#include "torusdyn/zooming.hpp"

namespace torusdyn {

// Delta = B_r(p'), a metric ball standing in for the nested zooming ball.
struct InducedBase {
  TorusPoint center;
  double r = 0.0;
  double delta = 0.0;
  int ell = 1;
  bool nested_ball_approximation = true;

  Ball ball() const { return Ball(center, r); }
};

// Throws RadiusTooLarge unless 0 < r < delta / 4.
InducedBase build_base(const DynamicalMap& f, const SourceZoomingData& source, double r);

struct MarkovCell {
  int id = 0;
  int return_time = 0;           // R(P), in blocks of ell steps of f
  std::vector<int> itinerary;    // f-branch labels, first applied to the base center first
  // chain[j] is the j-th point of the branch orbit of the cell center;
  // f(chain.back()) is the base center. chain.size() = R * ell.
  std::vector<TorusPoint> chain;
  TorusPoint center;
  double outer_radius = 0.0;     // max distance of the pulled-back boundary from the center
  double inner_radius = 0.0;     // min distance
  double derivative_bound = 0.0; // min conorm of Df^{R ell} over the sampled cell
  double volume_fraction = 0.0;  // |P| / |Delta|, from |det Df^{R ell}| at the center
  double zooming_margin = 0.0;
};

struct LevelReport {
  int return_time = 0;
  std::size_t candidates = 0;        // inside Delta with no earlier return
  std::size_t overlap_discarded = 0;
  std::size_t zooming_rejected = 0;
  std::size_t committed = 0;
  bool truncated = false;            // per-level cap reached before the search finished
};

struct InducedOptions {
  int max_R = 8;
  std::size_t cell_budget = 2048;
  std::size_t per_level_cap = 0;        // 0: cell_budget / max_R
  std::size_t node_budget = 50000000;   // search nodes before BudgetExceeded
  double proxy_theta = 0.5;             // reference geometric family for the nu-proxy mass
  bool certify_zooming = true;
  int threads = 0;
};

struct InducedMarkovMap {
  MapPtr map;
  InducedBase base;
  ZoomingContraction alpha;
  std::vector<MarkovCell> cells;     // sorted by (R, itinerary)
  std::vector<LevelReport> levels;   // one per R = 1..max_R
  int max_R = 0;
  std::size_t cell_budget = 0;
  std::size_t per_level_cap = 0;
  std::size_t nodes_visited = 0;
  double lebesgue_coverage = 0.0;    // sum of volume fractions
  double nu_proxy_mass = 0.0;        // sum over non-empty levels of (1 - theta) theta^{R-1}
  double proxy_theta = 0.5;
  double lipschitz_bound = 0.0;      // sup |Df| used for search pruning

  std::size_t size() const { return cells.size(); }
  const MarkovCell& cell(int id) const;
  int ell() const { return base.ell; }
};

// Enumerates first-zooming-return branches: for R = 1..max_R, in
// lexicographic order of the f-branch itinerary, every composed inverse
// branch of f^{R ell} whose image of Delta lies strictly inside Delta, whose
// images at the earlier block times are disjoint from Delta, and whose
// composition is an (alpha, delta)-zooming time. Cells overlapping earlier
// committed cells are discarded. At most per_level_cap cells per level.
// Throws BudgetExceeded (node budget) and NoCellsFound.
InducedMarkovMap build_induced_map(MapPtr f, const InducedBase& base, const ZoomingContraction& alpha,
                                   const InducedOptions& options = {});

// Chain of branch reference points for an itinerary (see MarkovCell::chain).
std::vector<TorusPoint> itinerary_chain(const DynamicalMap& f, const TorusPoint& base_center, const std::vector<int>& itinerary);

// Pulls a point of Delta back into the cell.
TorusPoint cell_pull_back(const DynamicalMap& f, const MarkovCell& cell, const TorusPoint& y);

struct MarkovReport {
  bool passed = false;
  bool vacuous = false;               // empty partition: passes with a warning
  std::size_t cells_checked = 0;
  std::size_t points_checked = 0;
  double worst_return_error = 0.0;    // max |f^{R ell}(z) - y|
  double worst_inside_ratio = 0.0;    // max |z - p'| / r over pulled-back points
  double min_separation = 0.0;        // min distance between distinct pulled-back samples of one cell
  double min_derivative_bound = 0.0;
};

// For each cell pulls a Delta-covering grid of about samples_per_cell points
// back through the branch and checks: the points land inside Delta, forward
// iteration returns to the grid within 1e-9, distinct grid points stay
// distinct. Throws MarkovViolation (detail = cell id) on failure.
MarkovReport certify_markov(const InducedMarkovMap& F, int samples_per_cell = 64);
MarkovReport certify_markov(const DynamicalMap& f, const InducedBase& base, std::span<const MarkovCell> cells,
                            int samples_per_cell = 64);

// Mass of {R >= n} under per-cell masses (normalized to total 1).
double return_time_tail(const InducedMarkovMap& F, std::span<const double> masses, int n);
// Cell volumes as masses (Lebesgue proxy).
std::vector<double> lebesgue_masses(const InducedMarkovMap& F);

nlohmann::json to_json(const InducedMarkovMap& F);
// Rebuilds the map from its JSON document (chains are recomputed from the
// itineraries).
InducedMarkovMap induced_map_from_json(const nlohmann::json& j);

}  // namespace torusdyn
