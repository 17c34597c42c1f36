#include "torusdyn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "torusdyn/ergodic_stats.hpp"
#include "torusdyn/errors.hpp"
#include "torusdyn/induced_markov.hpp"
#include "torusdyn/numeric.hpp"
#include "torusdyn/orbit_analysis.hpp"
#include "torusdyn/random.hpp"
#include "torusdyn/tower_measures.hpp"
#include "torusdyn/zooming.hpp"

namespace torusdyn {

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order{"map",    "periodic", "verify_example", "preorbit_density",
                                              "source", "induced",  "measures",       "stats"};
  return order;
}

std::vector<std::string> stage_dependencies(const std::string& stage) {
  if (stage == "map") return {};
  if (stage == "periodic" || stage == "verify_example" || stage == "preorbit_density") return {"map"};
  if (stage == "source") return {"periodic"};
  if (stage == "induced") return {"source"};
  if (stage == "measures") return {"induced"};
  if (stage == "stats") return {"measures"};
  throw Error(ErrorCode::ConfigValidation, "unknown stage '" + stage + "'");
}

void check_stage_dependencies(const std::vector<std::string>& stages) {
  const std::set<std::string> have(stages.begin(), stages.end());
  for (const auto& s : stage_order()) {
    if (!have.count(s)) continue;
    for (const auto& dep : stage_dependencies(s)) {
      if (!have.count(dep)) {
        throw Error(ErrorCode::StageDependency, "stage '" + s + "' requires stage '" + dep + "', which is not requested");
      }
    }
  }
}

std::vector<std::string> stage_closure(const std::vector<std::string>& stages) {
  std::set<std::string> need;
  std::vector<std::string> todo(stages.begin(), stages.end());
  while (!todo.empty()) {
    const std::string s = todo.back();
    todo.pop_back();
    if (!need.insert(s).second) continue;
    for (const auto& d : stage_dependencies(s)) todo.push_back(d);
  }
  std::vector<std::string> out;
  for (const auto& s : stage_order()) {
    if (need.count(s)) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// config parsing

namespace {

// Reads the keys of one JSON object, recording problems instead of throwing.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name, std::vector<std::string>& errors)
      : j_(j), name_(std::move(name)), errors_(errors) {
    if (!j_.is_object()) errors_.push_back(name_ + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(name_ + "." + key + ": wrong type");
    }
  }

  void get_point(const std::string& key, std::optional<std::vector<double>>& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(name_ + "." + key + ": expected an array of numbers");
    }
  }

  void mark(const std::string& key) { seen_.insert(key); }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) errors_.push_back(name_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

const nlohmann::json& section_or_empty(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  return j.contains(key) ? j.at(key) : empty;
}

void require(bool ok, const std::string& message, std::vector<std::string>& errors) {
  if (!ok) errors.push_back(message);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  if (!j.is_object()) throw Error(ErrorCode::ConfigValidation, "config must be a JSON object");

  Section top(j, "config", errors);
  top.get("map", c.map);
  top.get("stages", c.stages);
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.get("output_dir", c.output_dir);
  for (const char* key : {"periodic", "example", "density", "source", "induced", "measures", "stats"}) top.mark(key);
  top.finish();

  Section periodic(section_or_empty(j, "periodic"), "periodic", errors);
  periodic.get("period", c.periodic.period);
  periodic.get("seed_grid", c.periodic.seed_grid);
  periodic.finish();

  Section example(section_or_empty(j, "example"), "example", errors);
  example.get("volume_grid", c.example.volume_grid);
  example.get("expansion_grid", c.example.expansion_grid);
  example.get("density_eps", c.example.density_eps);
  example.get("density_max_depth", c.example.density_max_depth);
  example.get("density_node_budget", c.example.density_node_budget);
  example.get("irg_eps", c.example.irg_eps);
  example.get("irg_radius", c.example.irg_radius);
  example.get("irg_steps", c.example.irg_steps);
  example.finish();

  Section density(section_or_empty(j, "density"), "density", errors);
  density.get_point("point", c.density.point);
  density.get("eps", c.density.eps);
  density.get("max_depth", c.density.max_depth);
  density.get("node_budget", c.density.node_budget);
  density.finish();

  Section source(section_or_empty(j, "source"), "source", errors);
  source.get_point("point", c.source.point);
  source.get("delta_search", c.source.delta_search);
  source.get("horizon", c.source.horizon);
  source.get_point("scan_point", c.source.scan_point);
  source.get("scan_n_max", c.source.scan_n_max);
  source.finish();

  Section induced(section_or_empty(j, "induced"), "induced", errors);
  induced.get("r_over_delta", c.induced.r_over_delta);
  induced.get("alpha_rate", c.induced.alpha_rate);
  induced.get("max_R", c.induced.max_R);
  induced.get("cell_budget", c.induced.cell_budget);
  induced.get("node_budget", c.induced.node_budget);
  induced.get("markov_samples", c.induced.markov_samples);
  induced.finish();

  Section measures(section_or_empty(j, "measures"), "measures", errors);
  measures.get("family", c.measures.family);
  measures.get("theta", c.measures.theta);
  measures.get("cascade_depth", c.measures.cascade_depth);
  measures.get("n_samples", c.measures.n_samples);
  measures.get("histogram_bins", c.measures.histogram_bins);
  measures.get("csv_samples", c.measures.csv_samples);
  measures.finish();

  Section stats(section_or_empty(j, "stats"), "stats", errors);
  stats.get("parts", c.stats.parts);
  stats.get("lyapunov_iterates", c.stats.lyapunov_iterates);
  stats.get("lyapunov_samples", c.stats.lyapunov_samples);
  stats.get("lebesgue_iterates", c.stats.lebesgue_iterates);
  stats.get("psi", c.stats.psi);
  stats.get("phi", c.stats.phi);
  stats.get("reference_observable", c.stats.reference_observable);
  stats.get("max_lag", c.stats.max_lag);
  stats.get("correlation_samples", c.stats.correlation_samples);
  stats.get("tail_n_max", c.stats.tail_n_max);
  stats.finish();

  // Ranges.
  require(c.map.is_object() && c.map.contains("family"), "map: a descriptor with a 'family' is required", errors);
  require(!c.stages.empty(), "stages: at least one stage is required", errors);
  for (const auto& s : c.stages) {
    require(std::find(stage_order().begin(), stage_order().end(), s) != stage_order().end(),
            "stages: unknown stage '" + s + "'", errors);
  }
  require(c.threads >= 0, "threads must be >= 0", errors);
  require(c.periodic.period >= 1 && c.periodic.period <= 12, "periodic.period must lie in [1, 12]", errors);
  require(c.periodic.seed_grid >= 2 && c.periodic.seed_grid <= 4096, "periodic.seed_grid must lie in [2, 4096]", errors);
  require(c.example.volume_grid >= 8, "example.volume_grid must be >= 8", errors);
  require(c.example.expansion_grid >= 8, "example.expansion_grid must be >= 8", errors);
  require(c.example.density_eps > 0.0, "example.density_eps must be > 0", errors);
  require(c.example.density_max_depth >= 0, "example.density_max_depth must be >= 0", errors);
  require(c.example.irg_eps > 0.0 && c.example.irg_radius > 0.0 && c.example.irg_radius < 0.5,
          "example.irg_eps must be > 0 and example.irg_radius in (0, 1/2)", errors);
  require(c.example.irg_steps >= 1, "example.irg_steps must be >= 1", errors);
  require(c.density.eps > 0.0, "density.eps must be > 0", errors);
  require(c.density.max_depth >= 0, "density.max_depth must be >= 0", errors);
  require(c.source.delta_search > 0.0 && c.source.delta_search < 0.5, "source.delta_search must lie in (0, 1/2)", errors);
  require(c.source.horizon >= 1, "source.horizon must be >= 1", errors);
  require(c.source.scan_n_max >= 1, "source.scan_n_max must be >= 1", errors);
  require(c.induced.r_over_delta > 0.0 && c.induced.r_over_delta < 0.25, "induced.r_over_delta must lie in (0, 1/4)", errors);
  require(c.induced.alpha_rate > 0.0 && c.induced.alpha_rate < 1.0, "induced.alpha_rate must lie in (0, 1)", errors);
  require(c.induced.max_R >= 1 && c.induced.max_R <= 64, "induced.max_R must lie in [1, 64]", errors);
  require(c.induced.cell_budget >= 1, "induced.cell_budget must be >= 1", errors);
  require(c.induced.markov_samples >= 1, "induced.markov_samples must be >= 1", errors);
  require(c.measures.family == "geometric" || c.measures.family == "uniform", "measures.family must be geometric or uniform", errors);
  require(c.measures.theta > 0.0 && c.measures.theta < 1.0, "measures.theta must lie in (0, 1)", errors);
  require(c.measures.cascade_depth >= 1, "measures.cascade_depth must be >= 1", errors);
  require(c.measures.n_samples >= 1000, "measures.n_samples must be >= 1000", errors);
  require(c.measures.histogram_bins >= 1, "measures.histogram_bins must be >= 1", errors);
  for (const auto& p : c.stats.parts) {
    require(p == "lyapunov" || p == "correlations" || p == "tail", "stats.parts: unknown part '" + p + "'", errors);
  }
  require(c.stats.lyapunov_iterates >= 100, "stats.lyapunov_iterates must be >= 100", errors);
  require(c.stats.lebesgue_iterates >= 100, "stats.lebesgue_iterates must be >= 100", errors);
  require(c.stats.lyapunov_samples >= 1, "stats.lyapunov_samples must be >= 1", errors);
  require(c.stats.max_lag >= 8, "stats.max_lag must be >= 8", errors);
  require(c.stats.correlation_samples >= 128, "stats.correlation_samples must be >= 128", errors);
  require(c.stats.tail_n_max >= 1, "stats.tail_n_max must be >= 1", errors);
  for (const auto& name : {c.stats.psi, c.stats.phi, c.stats.reference_observable}) {
    try {
      observable_from_name(name);
    } catch (const Error&) {
      errors.push_back("stats: unknown observable '" + name + "'");
    }
  }
  const bool wants_density = std::find(c.stages.begin(), c.stages.end(), "preorbit_density") != c.stages.end();
  require(!wants_density || c.density.point || c.source.point, "density.point (or source.point) is required for preorbit_density",
          errors);

  if (!errors.empty()) {
    std::ostringstream msg;
    for (std::size_t i = 0; i < errors.size(); ++i) msg << (i ? "; " : "") << errors[i];
    throw Error(ErrorCode::ConfigValidation, msg.str(), static_cast<long long>(errors.size()));
  }
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["map"] = c.map;
  j["stages"] = c.stages;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  j["periodic"] = {{"period", c.periodic.period}, {"seed_grid", c.periodic.seed_grid}};
  j["example"] = {{"volume_grid", c.example.volume_grid},
                  {"expansion_grid", c.example.expansion_grid},
                  {"density_eps", c.example.density_eps},
                  {"density_max_depth", c.example.density_max_depth},
                  {"density_node_budget", c.example.density_node_budget},
                  {"irg_eps", c.example.irg_eps},
                  {"irg_radius", c.example.irg_radius},
                  {"irg_steps", c.example.irg_steps}};
  auto opt_point = [](const std::optional<std::vector<double>>& p) { return p ? nlohmann::json(*p) : nlohmann::json(); };
  j["density"] = {{"point", opt_point(c.density.point)},
                  {"eps", c.density.eps},
                  {"max_depth", c.density.max_depth},
                  {"node_budget", c.density.node_budget}};
  j["source"] = {{"point", opt_point(c.source.point)},
                 {"delta_search", c.source.delta_search},
                 {"horizon", c.source.horizon},
                 {"scan_point", opt_point(c.source.scan_point)},
                 {"scan_n_max", c.source.scan_n_max}};
  j["induced"] = {{"r_over_delta", c.induced.r_over_delta},
                  {"alpha_rate", c.induced.alpha_rate},
                  {"max_R", c.induced.max_R},
                  {"cell_budget", c.induced.cell_budget},
                  {"node_budget", c.induced.node_budget},
                  {"markov_samples", c.induced.markov_samples}};
  j["measures"] = {{"family", c.measures.family},
                   {"theta", c.measures.theta},
                   {"cascade_depth", c.measures.cascade_depth},
                   {"n_samples", c.measures.n_samples},
                   {"histogram_bins", c.measures.histogram_bins},
                   {"csv_samples", c.measures.csv_samples}};
  j["stats"] = {{"parts", c.stats.parts},
                {"lyapunov_iterates", c.stats.lyapunov_iterates},
                {"lyapunov_samples", c.stats.lyapunov_samples},
                {"lebesgue_iterates", c.stats.lebesgue_iterates},
                {"psi", c.stats.psi},
                {"phi", c.stats.phi},
                {"reference_observable", c.stats.reference_observable},
                {"max_lag", c.stats.max_lag},
                {"correlation_samples", c.stats.correlation_samples},
                {"tail_n_max", c.stats.tail_n_max}};
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigValidation, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigValidation, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// stages

namespace {

struct Context {
  const ExperimentConfig& config;
  MapPtr map;
  std::optional<PeriodicSearch> periodic;
  std::optional<SourceZoomingData> source;
  std::shared_ptr<const InducedMarkovMap> induced;
  std::optional<TowerMeasure> measure;
  std::map<std::string, nlohmann::json> files;  // extra output files by name
  std::map<std::string, std::string> csv_files;
};

struct StageOutput {
  nlohmann::json report;
  nlohmann::json certificates = nlohmann::json::object();
};

TorusPoint point_of(const std::vector<double>& coords, int dim) {
  if (static_cast<int>(coords.size()) != dim) {
    throw Error(ErrorCode::InvalidArgument, "point has " + std::to_string(coords.size()) + " coordinates, map dimension is " + std::to_string(dim));
  }
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = coords[static_cast<std::size_t>(i)];
  return TorusPoint(v);
}

nlohmann::json orbit_json(const PeriodicOrbit& o) {
  return {{"point", to_json(o.point)},
          {"period", o.period},
          {"classification", to_string(o.classification)},
          {"moduli", o.moduli},
          {"complex_pair", o.complex_pair},
          {"residual", o.residual}};
}

StageOutput stage_map(Context& ctx) {
  ctx.map = make_map(ctx.config.map);
  StageOutput out;
  out.report = {{"family", ctx.map->family()},
                {"dimension", ctx.map->dimension()},
                {"degree", ctx.map->degree()},
                {"linear_part", to_json(ctx.map->linear_part())},
                {"descriptor", ctx.map->descriptor()}};
  if (auto ex = std::dynamic_pointer_cast<const PerturbedExampleMap>(ctx.map)) {
    out.report["sigma_grid"] = ex->sigma();
    out.report["u0"] = {{"center", to_json(ex->u0().center())}, {"radius", ex->u0().radius()}};
  }
  return out;
}

StageOutput stage_periodic(Context& ctx) {
  const auto& c = ctx.config.periodic;
  ctx.periodic = find_periodic_points(*ctx.map, c.period, c.seed_grid, ctx.config.threads);
  StageOutput out;
  auto orbits = nlohmann::json::array();
  std::size_t sources = 0;
  for (const auto& o : ctx.periodic->orbits) {
    orbits.push_back(orbit_json(o));
    sources += o.classification == Classification::Source;
  }
  out.report = {{"period", c.period},
                {"seed_grid", c.seed_grid},
                {"seeds", ctx.periodic->seeds},
                {"dropped", ctx.periodic->dropped},
                {"count", ctx.periodic->orbits.size()},
                {"sources", sources},
                {"orbits", orbits}};
  out.certificates["sources_found"] = sources > 0;
  return out;
}

StageOutput stage_verify_example(Context& ctx) {
  auto ex = std::dynamic_pointer_cast<const PerturbedExampleMap>(ctx.map);
  if (!ex) throw Error(ErrorCode::InvalidArgument, "verify_example needs a perturbed_example map");
  const auto& c = ctx.config.example;
  const auto& params = ex->params();
  StageOutput out;

  // |det Df| on the volume grid.
  double sigma = std::numeric_limits<double>::infinity();
  for (int i = 0; i < c.volume_grid; ++i) {
    for (int k = 0; k < c.volume_grid; ++k) {
      const TorusPoint x{static_cast<double>(i) / c.volume_grid, static_cast<double>(k) / c.volume_grid};
      sigma = std::min(sigma, std::abs(ex->derivative(x).determinant()));
    }
  }
  out.report["volume"] = {{"grid", c.volume_grid}, {"min_abs_det", sigma}};
  out.certificates["volume_expanding"] = sigma > 1.0;

  const auto expansion = verify_expanding_off_U0(*ex, ex->u0(), c.expansion_grid, kHyperMargin, ctx.config.threads);
  out.report["expansion_off_u0"] = {{"grid", c.expansion_grid},
                                    {"min_conorm", expansion.min_conorm},
                                    {"argmin", to_json(expansion.argmin)},
                                    {"points_checked", expansion.points_checked}};
  out.certificates["expanding_off_u0"] = expansion.expanding;

  const auto fixed = find_periodic_points(*ex, 1, 64, ctx.config.threads);
  std::optional<PeriodicOrbit> saddle, r1, r2;
  bool q_complex = !params.q_sites.empty();
  auto near_q = nlohmann::json::array();
  for (const auto& o : fixed.orbits) {
    const double dp = torus_distance(o.point, params.p);
    if (dp < 1e-6 && o.classification == Classification::Saddle) saddle = o;
    if (dp >= 1e-6 && dp < ex->u0().radius() && o.classification == Classification::Source) (r1 ? r2 : r1) = o;
  }
  for (const auto& q : params.q_sites) {
    bool found = false;
    for (const auto& o : fixed.orbits) {
      if (torus_distance(o.point, q) < 1e-6) {
        found = o.complex_pair && o.classification == Classification::Source;
        near_q.push_back(orbit_json(o));
      }
    }
    q_complex = q_complex && found;
  }
  out.report["fixed_points"] = {{"count", fixed.orbits.size()},
                                {"saddle_p", saddle ? orbit_json(*saddle) : nlohmann::json()},
                                {"r1", r1 ? orbit_json(*r1) : nlohmann::json()},
                                {"r2", r2 ? orbit_json(*r2) : nlohmann::json()},
                                {"q_sites", near_q}};
  out.certificates["saddle_at_p"] = saddle.has_value();
  out.certificates["sources_r1_r2"] = r1.has_value() && r2.has_value();
  out.certificates["complex_pair_at_q"] = q_complex;

  if (r1) {
    const auto cert = preorbit_density_certificate(*ex, r1->point, c.density_eps, c.density_max_depth, c.density_node_budget,
                                                   ctx.config.threads);
    out.report["preorbit_density_r1"] = {{"eps", cert.eps},
                                         {"dense", cert.dense},
                                         {"depth_used", cert.depth_used},
                                         {"max_depth", c.density_max_depth},
                                         {"union_size", cert.union_size},
                                         {"frontier_sizes", cert.frontier_sizes}};
    out.certificates["preorbit_density_r1"] = cert.dense;
  } else {
    out.certificates["preorbit_density_r1"] = false;
  }

  // Internal radius growth at the fixed point 0 of E, away from every support.
  const TorusPoint origin(Vec::Zero(ex->dimension()));
  const auto irg = verify_irg(*ex, origin, c.irg_steps, c.irg_eps, c.irg_radius, ex->u0());
  out.report["irg_origin"] = {{"holds", irg.holds}, {"n", irg.n}, {"eps", irg.eps}, {"r_target", irg.r_target}};
  out.certificates["irg_origin"] = irg.holds;
  return out;
}

StageOutput stage_preorbit_density(Context& ctx) {
  const auto& c = ctx.config.density;
  const auto& coords = c.point ? *c.point : *ctx.config.source.point;
  const TorusPoint x = point_of(coords, ctx.map->dimension());
  const auto cert = preorbit_density_certificate(*ctx.map, x, c.eps, c.max_depth, c.node_budget, ctx.config.threads);
  StageOutput out;
  out.report = {{"point", to_json(x)},
                {"eps", cert.eps},
                {"dense", cert.dense},
                {"depth_used", cert.depth_used},
                {"max_depth", c.max_depth},
                {"prune_cell", cert.prune_cell},
                {"union_size", cert.union_size},
                {"nodes_expanded", cert.nodes_expanded},
                {"frontier_sizes", cert.frontier_sizes}};
  out.certificates["preorbit_dense"] = cert.dense;
  return out;
}

StageOutput stage_source(Context& ctx) {
  const auto& c = ctx.config.source;
  const auto& orbits = ctx.periodic->orbits;
  std::optional<PeriodicOrbit> chosen;
  if (c.point) {
    const TorusPoint want = point_of(*c.point, ctx.map->dimension());
    for (const auto& o : orbits) {
      if (torus_distance(o.point, want) < 1e-6) chosen = o;
    }
    if (!chosen) throw Error(ErrorCode::NotASource, "no periodic point of the requested period at source.point");
  } else {
    for (const auto& o : orbits) {
      if (o.classification == Classification::Source) {
        chosen = o;
        break;
      }
    }
    if (!chosen) throw Error(ErrorCode::NotASource, "no source among the periodic points found");
  }
  ctx.source = compute_source_zooming_data(*ctx.map, *chosen, c.delta_search, c.horizon);
  const auto& d = *ctx.source;
  StageOutput out;
  auto orbit = nlohmann::json::array();
  for (const auto& p : d.orbit) orbit.push_back(to_json(p));
  out.report = {{"source", orbit_json(d.source)},
                {"orbit", orbit},
                {"gamma", d.gamma},
                {"n0", d.n0},
                {"ell", d.ell},
                {"delta", d.delta},
                {"branch_contraction", d.branch_contraction},
                {"sampled_ratio", d.sampled_ratio},
                {"min_block_log_conorm", d.min_block_log_conorm},
                {"representative", to_json(d.representative)}};
  out.certificates["source_block_contracts"] = d.branch_contraction <= 1.0 / 16.0 && d.sampled_ratio <= 1.0 / 16.0;
  if (c.scan_point) {
    const TorusPoint x = point_of(*c.scan_point, ctx.map->dimension());
    const auto freq = zooming_frequency(*ctx.map, x, ZoomingContraction{ctx.config.induced.alpha_rate}, d.delta, c.scan_n_max,
                                        ctx.config.threads);
    out.report["zooming_scan"] = {{"point", to_json(x)},
                                  {"n_max", c.scan_n_max},
                                  {"frequency", freq.frequency},
                                  {"zooming_times", freq.zooming_times}};
  }
  return out;
}

StageOutput stage_induced(Context& ctx) {
  const auto& c = ctx.config.induced;
  const auto base = build_base(*ctx.map, *ctx.source, c.r_over_delta * ctx.source->delta);
  InducedOptions opt;
  opt.max_R = c.max_R;
  opt.cell_budget = c.cell_budget;
  opt.node_budget = c.node_budget;
  opt.threads = ctx.config.threads;
  opt.proxy_theta = ctx.config.measures.theta;
  ctx.induced = std::make_shared<const InducedMarkovMap>(build_induced_map(ctx.map, base, ZoomingContraction{c.alpha_rate}, opt));
  const auto& F = *ctx.induced;
  StageOutput out;
  bool markov = false;
  nlohmann::json markov_report;
  try {
    const auto rep = certify_markov(F, c.markov_samples);
    markov = rep.passed;
    markov_report = {{"passed", rep.passed},
                     {"cells_checked", rep.cells_checked},
                     {"points_checked", rep.points_checked},
                     {"worst_step_error", rep.worst_return_error},
                     {"worst_inside_ratio", rep.worst_inside_ratio},
                     {"min_derivative_bound", rep.min_derivative_bound}};
  } catch (const Error& e) {
    markov_report = {{"passed", false}, {"violation", e.what()}, {"cell", e.detail()}};
  }
  std::map<int, std::size_t> histogram;
  double min_bound = std::numeric_limits<double>::infinity();
  for (const auto& cell : F.cells) {
    ++histogram[cell.return_time];
    min_bound = std::min(min_bound, cell.derivative_bound);
  }
  auto hist = nlohmann::json::array();
  for (const auto& [R, n] : histogram) hist.push_back({{"R", R}, {"cells", n}});
  out.report = {{"base", {{"center", to_json(base.center)}, {"r", base.r}, {"delta", base.delta}, {"ell", base.ell},
                          {"nested_ball_approximation", base.nested_ball_approximation}}},
                {"cells", F.size()},
                {"return_time_histogram", hist},
                {"levels", to_json(F)["levels"]},
                {"nu_proxy_mass", F.nu_proxy_mass},
                {"lebesgue_coverage", F.lebesgue_coverage},
                {"min_derivative_bound", min_bound},
                {"nodes_visited", F.nodes_visited},
                {"markov", markov_report}};
  out.certificates["markov"] = markov;
  out.certificates["expansion_gt_8"] = min_bound > 8.0;
  ctx.files["induced_map.json"] = to_json(F);
  return out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

StageOutput stage_measures(Context& ctx) {
  const auto& c = ctx.config.measures;
  const auto& F = *ctx.induced;
  auto weights = make_weights(F, weight_family_from_string(c.family), c.theta);
  ctx.measure = make_tower_measure(ctx.induced, weights, c.cascade_depth);
  const auto& m = *ctx.measure;
  const std::uint64_t seed = derive_seed(ctx.config.seed, 0x4d45);
  const auto sample = sample_mu_a(m, c.n_samples, seed, ctx.config.threads);
  StageOutput out;

  // Cylinder identities on a deterministic selection of ids.
  const int n = static_cast<int>(F.size());
  double additivity = 0.0, invariance = 0.0;
  for (int p = 0; p < n; p += std::max(1, n / 16)) {
    std::vector<double> terms;
    for (int q = 0; q < n; ++q) terms.push_back(cylinder_measure(m.weights, std::vector<int>{p, q}));
    additivity = std::max(additivity, std::abs(pairwise_sum(terms) - m.weights.a[static_cast<std::size_t>(p)]));
    for (const auto& cyl : {std::vector<int>{p}, std::vector<int>{p, (p + 1) % n}, std::vector<int>{p, (p + 3) % n, (p + 7) % n}}) {
      const double direct = cylinder_measure(m.weights, cyl);
      invariance = std::max(invariance, std::abs(preimage_cylinder_measure(m.weights, cyl) - direct) / direct);
    }
  }
  const auto kac = kac_marginal_test(m, sample.cells);

  // Histogram on a product grid with about histogram_bins cells.
  const int dim = F.map->dimension();
  const int per_axis = std::max(1, static_cast<int>(std::lround(std::pow(c.histogram_bins, 1.0 / dim))));
  std::size_t total_bins = 1;
  for (int i = 0; i < dim; ++i) total_bins *= static_cast<std::size_t>(per_axis);
  std::vector<std::size_t> bins(total_bins, 0);
  std::vector<double> psi, residual;
  const double two_pi = 2.0 * std::numbers::pi;
  for (const auto& p : sample.points) {
    std::size_t idx = 0;
    for (int i = dim - 1; i >= 0; --i) idx = idx * per_axis + std::min(per_axis - 1, static_cast<int>(p[i] * per_axis));
    ++bins[idx];
    psi.push_back(std::cos(two_pi * p[0]));
    residual.push_back(std::cos(two_pi * F.map->evaluate(p)[0]) - psi.back());
  }
  const std::size_t empty_bins = static_cast<std::size_t>(std::count(bins.begin(), bins.end(), std::size_t{0}));
  const auto inv = mean_with_error(residual, seed);
  std::vector<double> in_delta;
  for (const auto& p : sample.points) in_delta.push_back(F.base.ball().contains(p) ? 1.0 : 0.0);
  const auto delta_mass = mean_with_error(in_delta, seed);
  const auto cos_mean = mean_with_error(psi, seed);

  out.report = {{"family", c.family},
                {"theta", c.theta},
                {"cascade_depth", c.cascade_depth},
                {"n_samples", c.n_samples},
                {"mean_return", m.mean_return},
                {"discarded_mass", m.weights.discarded_mass},
                {"summability", m.weights.summability},
                {"cylinder_additivity_error", additivity},
                {"cylinder_invariance_error", invariance},
                {"kac", {{"statistic", kac.statistic}, {"dof", kac.dof}, {"p_value", kac.p_value}, {"bins", kac.bins}}},
                {"histogram", {{"per_axis", per_axis}, {"bins", total_bins}, {"empty", empty_bins}}},
                {"invariance_residual", {{"observable", "cos_2pi_x"}, {"value", inv.value}, {"std_error", inv.std_error}}},
                {"estimates",
                 {{"delta_mass", {{"value", delta_mass.value}, {"std_error", delta_mass.std_error},
                                  {"lower_bound", 1.0 / (m.ell * m.mean_return)}, {"systematic_error", m.weights.discarded_mass}}},
                  {"cos_2pi_x", {{"value", cos_mean.value}, {"std_error", cos_mean.std_error},
                                 {"systematic_error", m.weights.discarded_mass}}}}}};
  out.certificates["cylinder_additivity"] = additivity <= 1e-14;
  out.certificates["cylinder_invariance"] = invariance <= 1e-14;
  out.certificates["kac_marginal"] = kac.p_value > 0.01;
  out.certificates["full_support"] = empty_bins == 0;
  out.certificates["invariance_residual"] = std::abs(inv.value) < 3.0 * inv.std_error || inv.std_error == 0.0;

  std::ostringstream csv;
  csv << "index,cell";
  for (int i = 0; i < dim; ++i) csv << ",x" << i;
  csv << "\n";
  for (std::size_t s = 0; s < std::min(c.csv_samples, sample.points.size()); ++s) {
    csv << s << "," << sample.cells[s];
    for (int i = 0; i < dim; ++i) csv << "," << format_double(sample.points[s][i]);
    csv << "\n";
  }
  ctx.csv_files["samples.csv"] = csv.str();
  return out;
}

nlohmann::json curve_json(const CorrelationCurve& c) {
  return {{"psi", c.psi},
          {"phi", c.phi},
          {"n_samples", c.n_samples},
          {"correlations", c.correlations},
          {"std_errors", c.std_errors},
          {"fit_lags", c.fit_lags},
          {"slope", c.fit.slope},
          {"intercept", c.fit.intercept},
          {"r_squared", c.fit.r_squared_defined ? nlohmann::json(c.fit.r_squared) : nlohmann::json()},
          {"signal_below_noise", c.signal_below_noise}};
}

StageOutput stage_stats(Context& ctx) {
  const auto& c = ctx.config.stats;
  const auto& F = *ctx.induced;
  const auto& m = *ctx.measure;
  const DynamicalMap& f = *F.map;
  const int threads = ctx.config.threads;
  auto wants = [&](const char* part) { return std::find(c.parts.begin(), c.parts.end(), part) != c.parts.end(); };
  StageOutput out;
  if (wants("lyapunov")) {
    const auto mu = lyapunov_exponents(f, mu_a_sampler(m, threads), c.lyapunov_iterates, c.lyapunov_samples,
                                       derive_seed(ctx.config.seed, 0x4c59), threads);
    const auto leb = lyapunov_exponents(f, lebesgue_sampler(f.dimension()), c.lebesgue_iterates, 1,
                                        derive_seed(ctx.config.seed, 0x4c45), threads);
    const double threshold = std::log(8.0) / F.ell();
    out.report["lyapunov"] = {{"mu_a", {{"exponents", mu.exponents}, {"std_errors", mu.std_errors},
                                        {"n_iterates", mu.n_iterates}, {"n_samples", mu.n_samples},
                                        {"log_det_average", mu.log_det_average}}},
                              {"lebesgue", {{"exponents", leb.exponents}, {"n_iterates", leb.n_iterates}}},
                              {"threshold_per_step", threshold}};
    out.certificates["lyapunov_expanding"] = mu.exponents.back() > threshold;
  }
  if (wants("correlations")) {
    const auto psi = observable_from_name(c.psi), phi = observable_from_name(c.phi);
    const auto ref = observable_from_name(c.reference_observable);
    const std::uint64_t seed = derive_seed(ctx.config.seed, 0x434f);
    const auto curve = estimate_correlations(f, mu_a_sampler(m, threads), psi, phi, c.max_lag, c.correlation_samples, seed, threads);
    const auto ref_curve = estimate_correlations(f, mu_a_sampler(m, threads), ref, ref, c.max_lag, c.correlation_samples, seed, threads);
    out.report["correlations"] = {{"mu_a", curve_json(curve)}, {"reference", curve_json(ref_curve)}};
    out.certificates["correlation_decay"] =
        !curve.signal_below_noise && curve.fit.slope < 0.0 && curve.fit.r_squared_defined && curve.fit.r_squared > 0.9;
    std::ostringstream csv;
    csv << "lag,correlation,std_error\n";
    for (std::size_t k = 0; k < curve.lags.size(); ++k) {
      csv << curve.lags[k] << "," << format_double(curve.correlations[k]) << "," << format_double(curve.std_errors[k]) << "\n";
    }
    ctx.csv_files["correlations.csv"] = csv.str();
  }
  if (wants("tail")) {
    const auto fit = tail_decay_fit(F, m.weights, std::min(c.tail_n_max, F.max_R));
    out.report["tail"] = {{"family", to_string(m.weights.family)},
                          {"tails", fit.tails},
                          {"slope", fit.fit.slope},
                          {"r_squared", fit.fit.r_squared_defined ? nlohmann::json(fit.fit.r_squared) : nlohmann::json()}};
    if (m.weights.family == WeightFamily::Geometric) {
      out.certificates["tail_exponential"] = fit.fit.r_squared_defined && fit.fit.r_squared > 0.99 && fit.fit.slope < 0.0;
    }
  }
  return out;
}

StageOutput run_stage(const std::string& stage, Context& ctx) {
  if (stage == "map") return stage_map(ctx);
  if (stage == "periodic") return stage_periodic(ctx);
  if (stage == "verify_example") return stage_verify_example(ctx);
  if (stage == "preorbit_density") return stage_preorbit_density(ctx);
  if (stage == "source") return stage_source(ctx);
  if (stage == "induced") return stage_induced(ctx);
  if (stage == "measures") return stage_measures(ctx);
  return stage_stats(ctx);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path.string() + "'");
  out << content;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
  RunResult result;
  try {
    check_stage_dependencies(config.stages);
  } catch (const Error& e) {
    result.exit_code = kExitDependency;
    result.diagnostic = std::string("config: ") + e.what();
    result.summary = {{"exit_code", result.exit_code}, {"error", e.what()}};
    return result;
  }
  if (config.threads > 0) set_default_threads(config.threads);

  std::filesystem::path dir;
  if (!config.output_dir.empty()) {
    dir = config.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      result.exit_code = kExitIo;
      result.diagnostic = "output: cannot create '" + dir.string() + "'";
      return result;
    }
  }

  Context ctx{config, nullptr, std::nullopt, std::nullopt, nullptr, std::nullopt, {}, {}};
  nlohmann::json certificates = nlohmann::json::object();
  auto stages_run = nlohmann::json::array();
  const auto& order = stage_order();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& stage = order[i];
    if (std::find(config.stages.begin(), config.stages.end(), stage) == config.stages.end()) continue;
    try {
      auto out = run_stage(stage, ctx);
      out.report["stage"] = stage;
      out.report["certificates"] = out.certificates;
      for (const auto& [name, ok] : out.certificates.items()) certificates[stage + "." + name] = ok;
      result.reports[stage] = out.report;
      stages_run.push_back(stage);
    } catch (const Error& e) {
      result.exit_code = kExitStageBase + static_cast<int>(i);
      result.failed_stage = stage;
      result.diagnostic = stage + ": " + e.what();
      break;
    } catch (const std::exception& e) {
      result.exit_code = kExitStageBase + static_cast<int>(i);
      result.failed_stage = stage;
      result.diagnostic = stage + ": " + e.what();
      break;
    }
  }
  result.csv = ctx.csv_files;
  bool all_pass = true;
  for (const auto& [name, ok] : certificates.items()) all_pass = all_pass && ok.get<bool>();
  if (result.exit_code == kExitOk && !all_pass) result.exit_code = kExitCertificateFailed;

  // Output location and thread count do not affect any result.
  nlohmann::json config_json = to_json(config);
  config_json.erase("output_dir");
  config_json.erase("threads");
  result.summary = {{"config", config_json},
                    {"stages_run", stages_run},
                    {"certificates", certificates},
                    {"all_certificates_pass", all_pass},
                    {"exit_code", result.exit_code}};
  if (!result.failed_stage.empty()) {
    result.summary["failed_stage"] = result.failed_stage;
    result.summary["error"] = result.diagnostic;
  }

  if (!dir.empty()) {
    try {
      for (const auto& [stage, report] : result.reports) write_file(dir / (stage + ".json"), report.dump(2) + "\n");
      for (const auto& [name, doc] : ctx.files) write_file(dir / name, doc.dump(1) + "\n");
      for (const auto& [name, text] : ctx.csv_files) write_file(dir / name, text);
      write_file(dir / "summary.json", result.summary.dump(2) + "\n");
    } catch (const Error& e) {
      result.exit_code = kExitIo;
      result.diagnostic = std::string("output: ") + e.what();
    }
  }
  return result;
}

}  // namespace torusdyn
