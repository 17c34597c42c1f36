#include "torusdyn/induced_markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "torusdyn/errors.hpp"
#include "torusdyn/numeric.hpp"
#include "torusdyn/random.hpp"

namespace torusdyn {

InducedBase build_base(const DynamicalMap& f, const SourceZoomingData& source, double r) {
  if (source.representative.dim() != f.dimension()) throw Error(ErrorCode::InvalidArgument, "source dimension mismatch");
  if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "base radius must be positive");
  if (!(r < source.delta / 4.0)) {
    throw Error(ErrorCode::RadiusTooLarge,
                "r = " + std::to_string(r) + " must be below delta/4 = " + std::to_string(source.delta / 4.0));
  }
  InducedBase base;
  base.center = source.representative;
  base.r = r;
  base.delta = source.delta;
  base.ell = source.ell;
  return base;
}

const MarkovCell& InducedMarkovMap::cell(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= cells.size()) {
    throw Error(ErrorCode::UnknownCell, "no cell with id " + std::to_string(id), id);
  }
  return cells[static_cast<std::size_t>(id)];
}

namespace {

// Directions on the unit sphere used to track the boundary of pulled-back balls.
std::vector<Vec> boundary_directions(int n) {
  std::vector<Vec> dirs;
  if (n == 1) {
    dirs.push_back(Vec::Constant(1, -1.0));
    dirs.push_back(Vec::Constant(1, 1.0));
    return dirs;
  }
  if (n == 2) {
    for (int k = 0; k < 32; ++k) {
      const double t = 2.0 * std::numbers::pi * k / 32.0;
      Vec v(2);
      v << std::cos(t), std::sin(t);
      dirs.push_back(v);
    }
    return dirs;
  }
  Rng rng(0xb0a2d5ULL);
  for (int k = 0; k < 16 * n; ++k) {
    Vec v(n);
    // Box-Muller on raw uniforms keeps the directions platform independent.
    for (int i = 0; i < n; ++i) {
      const double u1 = 1.0 - rng.uniform();
      const double u2 = rng.uniform();
      v(i) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    dirs.push_back(v / v.norm());
  }
  return dirs;
}

double lipschitz_estimate(const DynamicalMap& f) {
  if (f.is_linear()) return operator_norm(f.linear_part().cast<double>());
  const int n = f.dimension();
  const int per_axis = std::max(4, static_cast<int>(std::floor(std::pow(65536.0, 1.0 / n))));
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(per_axis);
  double best = 0.0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vec x(n);
    std::size_t rest = idx;
    for (int i = 0; i < n; ++i) {
      x(i) = (static_cast<double>(rest % per_axis) + 0.5) / per_axis;
      rest /= per_axis;
    }
    best = std::max(best, operator_norm(f.derivative(TorusPoint(x))));
  }
  // Grid sup plus a margin for the unsampled part.
  return best * 1.05;
}

// A node of the branch search: the pulled-back center and the boundary of the
// pulled-back ball as offsets from it.
struct Frame {
  TorusPoint center;
  std::vector<Vec> offsets;
  int depth = 0;
  std::vector<TorusPoint> children;
  bool expanded = false;
  int next = 0;
};

struct Candidate {
  std::vector<int> itinerary;
  std::vector<TorusPoint> chain;
  std::vector<Vec> offsets;
  TorusPoint center;
};

double max_norm(const std::vector<Vec>& offsets) {
  double m = 0.0;
  for (const auto& v : offsets) m = std::max(m, v.norm());
  return m;
}

double min_norm(const std::vector<Vec>& offsets) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& v : offsets) m = std::min(m, v.norm());
  return m;
}

// Lexicographic depth-first enumeration of the inverse branches of f^{k ell}
// on Delta that return strictly inside Delta without meeting Delta at an
// earlier block time.
class BranchSearch {
 public:
  BranchSearch(const DynamicalMap& f, const InducedBase& base, int k, double lipschitz,
               const std::vector<TorusPoint>& base_orbit, std::size_t& nodes, std::size_t node_budget)
      : f_(f), base_(base), target_(k * base.ell), lip_(lipschitz), orbit_(base_orbit), nodes_(nodes),
        budget_(node_budget) {
    Frame root;
    root.center = base.center;
    for (const auto& d : boundary_directions(f.dimension())) root.offsets.push_back(d * base.r);
    stack_.push_back(std::move(root));
    // rho_t bounds the radius of f^t(Delta).
    rho_.push_back(base.r);
    for (int t = 1; t <= target_; ++t) rho_.push_back(rho_.back() * lip_);
  }

  std::optional<Candidate> next() {
    while (!stack_.empty()) {
      Frame& top = stack_.back();
      if (!top.expanded) {
        top.expanded = true;
        if (++nodes_ > budget_) {
          throw Error(ErrorCode::BudgetExceeded, "branch search exceeded " + std::to_string(budget_) + " nodes",
                      target_ / base_.ell);
        }
        try {
          top.children = f_.inverse_branch_points(top.center);
        } catch (const Error&) {
          top.children.clear();
        }
      }
      if (top.next >= static_cast<int>(top.children.size())) {
        stack_.pop_back();
        if (!labels_.empty()) labels_.pop_back();
        continue;
      }
      const int label = top.next++;
      const TorusPoint child = top.children[static_cast<std::size_t>(label)];
      const int d = top.depth + 1;
      const int t = target_ - d;
      // f^t maps the final cell into f^t(Delta), a ball of radius rho_t.
      if (rho_[static_cast<std::size_t>(t)] < 0.5 &&
          torus_distance(child, orbit_[static_cast<std::size_t>(t)]) >= rho_[static_cast<std::size_t>(t)] * (1.0 + 1e-9) + 1e-15) {
        continue;
      }
      std::vector<Vec> offsets;
      if (!pull_back_offsets(top, child, offsets)) continue;
      if (d % base_.ell == 0) {
        const double dist = torus_distance(child, base_.center);
        if (d == target_) {
          const double reach = displacement_reach(child, offsets);
          if (!(reach < base_.r)) continue;
          Candidate c;
          c.itinerary = labels_;
          c.itinerary.push_back(label);
          c.center = child;
          c.offsets = std::move(offsets);
          c.chain.push_back(child);
          for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
            if (it->depth > 0) c.chain.push_back(it->center);
          }
          return c;
        }
        // An earlier block time meeting Delta would make this an earlier return.
        if (!(dist >= base_.r + max_norm(offsets))) continue;
      }
      Frame frame;
      frame.center = child;
      frame.offsets = std::move(offsets);
      frame.depth = d;
      labels_.push_back(label);
      stack_.push_back(std::move(frame));
    }
    return std::nullopt;
  }

 private:
  // Tiny sets (and every set of a linear map) are pulled back through the
  // inverse derivative, which keeps offsets far below the coordinate ulp exact.
  bool pull_back_offsets(const Frame& parent, const TorusPoint& child, std::vector<Vec>& out) const {
    const double radius = max_norm(parent.offsets);
    out.clear();
    out.reserve(parent.offsets.size());
    try {
      if (f_.is_linear() || radius < 1e-6) {
        const Mat jac = f_.derivative(child);
        Eigen::PartialPivLU<Mat> lu{jac};
        for (const auto& v : parent.offsets) out.push_back(lu.solve(v));
      } else {
        for (const auto& v : parent.offsets) {
          const TorusPoint z = f_.local_inverse(child, translate(parent.center, v));
          out.push_back(displacement(child, z));
        }
      }
    } catch (const Error&) {
      return false;
    }
    return true;
  }

  // max over boundary samples of |(center + offset) - p'|, with the center
  // displacement taken once so the offsets keep their precision.
  double displacement_reach(const TorusPoint& center, const std::vector<Vec>& offsets) const {
    const Vec d = displacement(base_.center, center);
    double reach = 0.0;
    for (const auto& v : offsets) reach = std::max(reach, (d + v).norm());
    return reach;
  }

  const DynamicalMap& f_;
  const InducedBase& base_;
  int target_;
  double lip_;
  const std::vector<TorusPoint>& orbit_;
  std::size_t& nodes_;
  std::size_t budget_;
  std::vector<double> rho_;
  std::vector<Frame> stack_;
  std::vector<int> labels_;
};

struct CellMetrics {
  double derivative_bound = 0.0;
  double volume_fraction = 0.0;
  bool zooming = false;
  double margin = 0.0;
};

CellMetrics measure_candidate(const DynamicalMap& f, const IteratedMap& ftilde, const InducedBase& base,
                              const ZoomingContraction& alpha, const Candidate& c, bool certify) {
  CellMetrics m;
  const int steps = static_cast<int>(c.chain.size());
  const ScaledMatrix center_cocycle = derivative_cocycle_scaled(f, c.center, steps);
  const int n = f.dimension();
  m.volume_fraction = std::exp(-(std::log(std::abs(center_cocycle.mantissa.determinant())) + n * center_cocycle.log_scale));
  auto bound_at = [&](const ScaledMatrix& s) {
    return s.log_scale == 0.0 ? conorm(s.mantissa) : std::exp(s.log_conorm());
  };
  m.derivative_bound = bound_at(center_cocycle);
  if (!f.is_linear()) {
    for (const auto& v : c.offsets) {
      m.derivative_bound = std::min(m.derivative_bound, bound_at(derivative_cocycle_scaled(f, translate(c.center, v), steps)));
    }
  }
  if (!certify) {
    m.zooming = true;
    return m;
  }
  std::vector<TorusPoint> blocks;
  for (int j = 0; j < steps; j += base.ell) blocks.push_back(c.chain[static_cast<std::size_t>(j)]);
  const auto verdict = is_zooming_time_along(ftilde, blocks, base.center, alpha, base.delta);
  m.zooming = verdict.is_zooming();
  if (m.zooming) m.margin = verdict.certificate->contraction_margin;
  return m;
}

}  // namespace

std::vector<TorusPoint> itinerary_chain(const DynamicalMap& f, const TorusPoint& base_center, const std::vector<int>& itinerary) {
  std::vector<TorusPoint> forward;
  TorusPoint w = base_center;
  for (int label : itinerary) {
    const auto pre = f.inverse_branch_points(w);
    if (label < 0 || static_cast<std::size_t>(label) >= pre.size()) {
      throw Error(ErrorCode::InvalidArgument, "branch label " + std::to_string(label) + " out of range");
    }
    w = pre[static_cast<std::size_t>(label)];
    forward.push_back(w);
  }
  std::reverse(forward.begin(), forward.end());
  return forward;
}

TorusPoint cell_pull_back(const DynamicalMap& f, const MarkovCell& cell, const TorusPoint& y) {
  return pull_back_along(f, cell.chain, y).front();
}

InducedMarkovMap build_induced_map(MapPtr f, const InducedBase& base, const ZoomingContraction& alpha,
                                   const InducedOptions& options) {
  if (!f) throw Error(ErrorCode::InvalidArgument, "null map");
  if (options.max_R < 1) throw Error(ErrorCode::InvalidArgument, "max_R must be >= 1");
  if (options.cell_budget < 1) throw Error(ErrorCode::InvalidArgument, "cell_budget must be >= 1");
  if (base.ell < 1 || !(base.r > 0.0) || base.center.dim() != f->dimension()) {
    throw Error(ErrorCode::InvalidArgument, "malformed base");
  }
  if (!(options.proxy_theta > 0.0 && options.proxy_theta < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "proxy_theta must lie in (0, 1)");
  }

  InducedMarkovMap out;
  out.map = f;
  out.base = base;
  out.alpha = alpha;
  out.max_R = options.max_R;
  out.cell_budget = options.cell_budget;
  out.per_level_cap = options.per_level_cap > 0
                          ? options.per_level_cap
                          : std::max<std::size_t>(1, options.cell_budget / static_cast<std::size_t>(options.max_R));
  out.proxy_theta = options.proxy_theta;
  out.lipschitz_bound = lipschitz_estimate(*f);

  const IteratedMap ftilde(f, base.ell);
  std::vector<TorusPoint> orbit{base.center};
  for (int t = 0; t < options.max_R * base.ell; ++t) orbit.push_back(f->evaluate(orbit.back()));
  const int threads = options.threads > 0 ? options.threads : default_threads();

  for (int k = 1; k <= options.max_R && out.cells.size() < options.cell_budget; ++k) {
    LevelReport level;
    level.return_time = k;
    const std::size_t cap = std::min(out.per_level_cap, options.cell_budget - out.cells.size());
    BranchSearch search(*f, base, k, out.lipschitz_bound, orbit, out.nodes_visited, options.node_budget);
    bool exhausted = false;
    while (level.committed < cap && !exhausted) {
      // Gather a batch, dropping candidates that overlap committed cells.
      std::vector<Candidate> batch;
      const std::size_t want = std::min<std::size_t>(256, cap - level.committed);
      while (batch.size() < want) {
        auto c = search.next();
        if (!c) {
          exhausted = true;
          break;
        }
        ++level.candidates;
        const double outer = max_norm(c->offsets);
        bool overlaps = false;
        for (const auto& cell : out.cells) {
          if (torus_distance(cell.center, c->center) < cell.outer_radius + outer) {
            overlaps = true;
            break;
          }
        }
        if (overlaps) {
          ++level.overlap_discarded;
          continue;
        }
        batch.push_back(std::move(*c));
      }
      std::vector<CellMetrics> metrics(batch.size());
      parallel_for(batch.size(), threads, [&](std::size_t i) {
        metrics[i] = measure_candidate(*f, ftilde, base, alpha, batch[i], options.certify_zooming);
      });
      // Sequential claim in lexicographic order.
      for (std::size_t i = 0; i < batch.size() && level.committed < cap; ++i) {
        if (!metrics[i].zooming) {
          ++level.zooming_rejected;
          continue;
        }
        const double outer = max_norm(batch[i].offsets);
        bool overlaps = false;
        for (std::size_t c = out.cells.size() - std::min(out.cells.size(), level.committed); c < out.cells.size(); ++c) {
          if (torus_distance(out.cells[c].center, batch[i].center) < out.cells[c].outer_radius + outer) {
            overlaps = true;
            break;
          }
        }
        if (overlaps) {
          ++level.overlap_discarded;
          continue;
        }
        MarkovCell cell;
        cell.id = static_cast<int>(out.cells.size());
        cell.return_time = k;
        cell.itinerary = std::move(batch[i].itinerary);
        cell.chain = std::move(batch[i].chain);
        cell.center = batch[i].center;
        cell.outer_radius = outer;
        cell.inner_radius = min_norm(batch[i].offsets);
        cell.derivative_bound = metrics[i].derivative_bound;
        cell.volume_fraction = metrics[i].volume_fraction;
        cell.zooming_margin = metrics[i].margin;
        out.cells.push_back(std::move(cell));
        ++level.committed;
      }
    }
    level.truncated = level.committed >= cap && !exhausted;
    out.levels.push_back(level);
  }
  while (static_cast<int>(out.levels.size()) < options.max_R) {
    LevelReport empty;
    empty.return_time = static_cast<int>(out.levels.size()) + 1;
    empty.truncated = true;
    out.levels.push_back(empty);
  }
  if (out.cells.empty()) throw Error(ErrorCode::NoCellsFound, "no first-return branch found up to R = " + std::to_string(options.max_R));

  std::vector<double> fractions;
  for (const auto& c : out.cells) fractions.push_back(c.volume_fraction);
  out.lebesgue_coverage = pairwise_sum(fractions);
  std::vector<double> proxy;
  for (const auto& level : out.levels) {
    if (level.committed > 0) proxy.push_back((1.0 - out.proxy_theta) * std::pow(out.proxy_theta, level.return_time - 1));
  }
  out.nu_proxy_mass = pairwise_sum(proxy);
  return out;
}

namespace {

std::vector<Vec> delta_grid(int n, double r, int samples) {
  std::vector<Vec> pts;
  if (n == 1) {
    for (int i = 0; i < samples; ++i) pts.push_back(Vec::Constant(1, r * (-1.0 + (2.0 * i + 1.0) / samples)));
    return pts;
  }
  // Lattice points strictly inside the ball, about `samples` of them.
  const double unit_ball = std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
  const int g = std::max(2, static_cast<int>(std::ceil(std::pow(samples * std::pow(2.0, n) / unit_ball, 1.0 / n))));
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(g);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vec v(n);
    std::size_t rest = idx;
    for (int i = 0; i < n; ++i) {
      v(i) = r * (-1.0 + (2.0 * static_cast<double>(rest % g) + 1.0) / g);
      rest /= g;
    }
    if (v.norm() < r) pts.push_back(v);
  }
  return pts;
}

}  // namespace

MarkovReport certify_markov(const DynamicalMap& f, const InducedBase& base, std::span<const MarkovCell> cells,
                            int samples_per_cell) {
  if (samples_per_cell < 1) throw Error(ErrorCode::InvalidArgument, "samples_per_cell must be >= 1");
  MarkovReport report;
  report.min_derivative_bound = std::numeric_limits<double>::infinity();
  if (cells.empty()) {
    report.passed = true;
    report.vacuous = true;
    return report;
  }
  const auto grid = delta_grid(f.dimension(), base.r, samples_per_cell);
  for (const auto& cell : cells) {
    if (static_cast<int>(cell.chain.size()) != cell.return_time * base.ell) {
      throw Error(ErrorCode::MarkovViolation, "cell " + std::to_string(cell.id) + " has a chain of the wrong length", cell.id);
    }
    for (const auto& v : grid) {
      const TorusPoint y = translate(base.center, v);
      std::vector<TorusPoint> trail;
      try {
        trail = pull_back_along(f, cell.chain, y);
      } catch (const Error& e) {
        throw Error(ErrorCode::MarkovViolation, "cell " + std::to_string(cell.id) + ": branch undefined on Delta", cell.id);
      }
      const double inside = torus_distance(trail.front(), base.center) / base.r;
      report.worst_inside_ratio = std::max(report.worst_inside_ratio, inside);
      if (!(inside < 1.0)) {
        throw Error(ErrorCode::MarkovViolation, "cell " + std::to_string(cell.id) + " is not contained in Delta", cell.id);
      }
      for (std::size_t j = 0; j + 1 < trail.size(); ++j) {
        const double err = torus_distance(f.evaluate(trail[j]), trail[j + 1]);
        report.worst_return_error = std::max(report.worst_return_error, err);
        if (err > 1e-9) {
          throw Error(ErrorCode::MarkovViolation, "cell " + std::to_string(cell.id) + " does not map onto Delta", cell.id);
        }
      }
      ++report.points_checked;
    }
    if (!(cell.derivative_bound > 1.0)) {
      throw Error(ErrorCode::MarkovViolation, "cell " + std::to_string(cell.id) + " branch is not expanding", cell.id);
    }
    report.min_derivative_bound = std::min(report.min_derivative_bound, cell.derivative_bound);
    ++report.cells_checked;
  }
  report.passed = true;
  return report;
}

MarkovReport certify_markov(const InducedMarkovMap& F, int samples_per_cell) {
  return certify_markov(*F.map, F.base, F.cells, samples_per_cell);
}

double return_time_tail(const InducedMarkovMap& F, std::span<const double> masses, int n) {
  if (masses.size() != F.cells.size()) throw Error(ErrorCode::InvalidArgument, "one mass per cell required");
  std::vector<double> all(masses.begin(), masses.end());
  std::vector<double> tail;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (masses[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "masses must be non-negative");
    if (F.cells[i].return_time >= n) tail.push_back(masses[i]);
  }
  const double total = pairwise_sum(all);
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "total mass must be positive");
  return pairwise_sum(tail) / total;
}

std::vector<double> lebesgue_masses(const InducedMarkovMap& F) {
  std::vector<double> m;
  for (const auto& c : F.cells) m.push_back(c.volume_fraction);
  return m;
}

nlohmann::json to_json(const InducedMarkovMap& F) {
  nlohmann::json j;
  j["map"] = F.map->descriptor();
  j["base"] = {{"center", to_json(F.base.center)},
               {"r", F.base.r},
               {"delta", F.base.delta},
               {"ell", F.base.ell},
               {"nested_ball_approximation", F.base.nested_ball_approximation}};
  j["alpha_rate"] = F.alpha.rate;
  j["max_R"] = F.max_R;
  j["cell_budget"] = F.cell_budget;
  j["per_level_cap"] = F.per_level_cap;
  j["proxy_theta"] = F.proxy_theta;
  j["lipschitz_bound"] = F.lipschitz_bound;
  j["nodes_visited"] = F.nodes_visited;
  j["lebesgue_coverage"] = F.lebesgue_coverage;
  j["nu_proxy_mass"] = F.nu_proxy_mass;
  auto levels = nlohmann::json::array();
  for (const auto& l : F.levels) {
    levels.push_back({{"R", l.return_time},
                      {"candidates", l.candidates},
                      {"overlap_discarded", l.overlap_discarded},
                      {"zooming_rejected", l.zooming_rejected},
                      {"committed", l.committed},
                      {"truncated", l.truncated}});
  }
  j["levels"] = levels;
  auto cells = nlohmann::json::array();
  for (const auto& c : F.cells) {
    cells.push_back({{"id", c.id},
                     {"R", c.return_time},
                     {"itinerary", c.itinerary},
                     {"center", to_json(c.center)},
                     {"outer_radius", c.outer_radius},
                     {"inner_radius", c.inner_radius},
                     {"derivative_bound", c.derivative_bound},
                     {"volume_fraction", c.volume_fraction},
                     {"zooming_margin", c.zooming_margin}});
  }
  j["cells"] = cells;
  return j;
}

InducedMarkovMap induced_map_from_json(const nlohmann::json& j) {
  try {
    InducedMarkovMap F;
    F.map = make_map(j.at("map"));
    const auto& b = j.at("base");
    F.base.center = point_from_json(b.at("center"));
    F.base.r = b.at("r").get<double>();
    F.base.delta = b.at("delta").get<double>();
    F.base.ell = b.at("ell").get<int>();
    F.base.nested_ball_approximation = b.value("nested_ball_approximation", true);
    F.alpha.rate = j.at("alpha_rate").get<double>();
    F.max_R = j.at("max_R").get<int>();
    F.cell_budget = j.at("cell_budget").get<std::size_t>();
    F.per_level_cap = j.at("per_level_cap").get<std::size_t>();
    F.proxy_theta = j.at("proxy_theta").get<double>();
    F.lipschitz_bound = j.value("lipschitz_bound", 0.0);
    F.nodes_visited = j.value("nodes_visited", std::size_t{0});
    F.lebesgue_coverage = j.at("lebesgue_coverage").get<double>();
    F.nu_proxy_mass = j.at("nu_proxy_mass").get<double>();
    for (const auto& l : j.at("levels")) {
      LevelReport level;
      level.return_time = l.at("R").get<int>();
      level.candidates = l.at("candidates").get<std::size_t>();
      level.overlap_discarded = l.at("overlap_discarded").get<std::size_t>();
      level.zooming_rejected = l.at("zooming_rejected").get<std::size_t>();
      level.committed = l.at("committed").get<std::size_t>();
      level.truncated = l.at("truncated").get<bool>();
      F.levels.push_back(level);
    }
    for (const auto& c : j.at("cells")) {
      MarkovCell cell;
      cell.id = c.at("id").get<int>();
      cell.return_time = c.at("R").get<int>();
      cell.itinerary = c.at("itinerary").get<std::vector<int>>();
      cell.center = point_from_json(c.at("center"));
      cell.outer_radius = c.at("outer_radius").get<double>();
      cell.inner_radius = c.at("inner_radius").get<double>();
      cell.derivative_bound = c.at("derivative_bound").get<double>();
      cell.volume_fraction = c.at("volume_fraction").get<double>();
      cell.zooming_margin = c.at("zooming_margin").get<double>();
      if (static_cast<int>(cell.itinerary.size()) != cell.return_time * F.base.ell) {
        throw Error(ErrorCode::InvalidArgument, "cell " + std::to_string(cell.id) + " itinerary length mismatch");
      }
      cell.chain = itinerary_chain(*F.map, F.base.center, cell.itinerary);
      if (torus_distance(cell.chain.front(), cell.center) > 1e-9) {
        throw Error(ErrorCode::InvalidArgument, "cell " + std::to_string(cell.id) + " itinerary does not reproduce its center");
      }
      F.cells.push_back(std::move(cell));
    }
    return F;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed induced map document: ") + e.what());
  }
}

}  // namespace torusdyn
