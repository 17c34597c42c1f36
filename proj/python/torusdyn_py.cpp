#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "torusdyn/dynamics.hpp"
#include "torusdyn/ergodic_stats.hpp"
#include "torusdyn/errors.hpp"
#include "torusdyn/experiment.hpp"
#include "torusdyn/induced_markov.hpp"
#include "torusdyn/orbit_analysis.hpp"
#include "torusdyn/tower_measures.hpp"
#include "torusdyn/zooming.hpp"

namespace py = pybind11;
using namespace torusdyn;

namespace {

// Python objects cross the boundary as JSON text.
nlohmann::json from_py(const py::handle& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

TorusPoint point_of(const std::vector<double>& coords) {
  Vec v(static_cast<int>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) v(static_cast<int>(i)) = coords[i];
  return TorusPoint(v);
}

std::vector<double> coords_of(const TorusPoint& p) { return {p.coords().data(), p.coords().data() + p.dim()}; }

struct PyMap {
  MapPtr map;
};

struct PyInduced {
  std::shared_ptr<const InducedMarkovMap> map;
};

PyInduced build_induced(const PyMap& f, std::vector<double> source_point, double delta_search, double r_over_delta,
                        double alpha_rate, int max_R, std::size_t cell_budget, int threads) {
  const auto orbit = make_periodic_orbit(*f.map, point_of(source_point), 1);
  const auto data = compute_source_zooming_data(*f.map, orbit, delta_search);
  const auto base = build_base(*f.map, data, r_over_delta * data.delta);
  InducedOptions opt;
  opt.max_R = max_R;
  opt.cell_budget = cell_budget;
  opt.threads = threads;
  return {std::make_shared<const InducedMarkovMap>(build_induced_map(f.map, base, ZoomingContraction{alpha_rate}, opt))};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Expanding torus maps, induced Markov maps and tower measures";
  py::register_exception<Error>(m, "TorusdynError", PyExc_ValueError);

  py::class_<PyMap>(m, "Map")
      .def(py::init([](const py::object& descriptor) { return PyMap{make_map(from_py(descriptor))}; }),
           py::arg("descriptor"))
      .def_property_readonly("dimension", [](const PyMap& f) { return f.map->dimension(); })
      .def_property_readonly("degree", [](const PyMap& f) { return f.map->degree(); })
      .def_property_readonly("family", [](const PyMap& f) { return f.map->family(); })
      .def("descriptor", [](const PyMap& f) { return to_py(f.map->descriptor()); })
      .def("evaluate", [](const PyMap& f, std::vector<double> x) { return coords_of(f.map->evaluate(point_of(x))); })
      .def("derivative",
           [](const PyMap& f, std::vector<double> x) {
             const Mat d = f.map->derivative(point_of(x));
             std::vector<std::vector<double>> rows(static_cast<std::size_t>(d.rows()));
             for (int i = 0; i < d.rows(); ++i) {
               for (int k = 0; k < d.cols(); ++k) rows[static_cast<std::size_t>(i)].push_back(d(i, k));
             }
             return rows;
           })
      .def("preimages", [](const PyMap& f, std::vector<double> y) {
        std::vector<std::vector<double>> out;
        for (const auto& w : f.map->inverse_branch_points(point_of(y))) out.push_back(coords_of(w));
        return out;
      });

  m.def(
      "periodic_points",
      [](const PyMap& f, int period, int seed_grid, int threads) {
        py::list out;
        for (const auto& o : find_periodic_points(*f.map, period, seed_grid, threads).orbits) {
          py::dict d;
          d["point"] = coords_of(o.point);
          d["period"] = o.period;
          d["classification"] = to_string(o.classification);
          d["moduli"] = o.moduli;
          out.append(d);
        }
        return out;
      },
      py::arg("map"), py::arg("period") = 1, py::arg("seed_grid") = 64, py::arg("threads") = 0);

  py::class_<PyInduced>(m, "InducedMap")
      .def_property_readonly("size", [](const PyInduced& F) { return F.map->size(); })
      .def_property_readonly("ell", [](const PyInduced& F) { return F.map->ell(); })
      .def_property_readonly("nu_proxy_mass", [](const PyInduced& F) { return F.map->nu_proxy_mass; })
      .def_property_readonly("lebesgue_coverage", [](const PyInduced& F) { return F.map->lebesgue_coverage; })
      .def("return_times",
           [](const PyInduced& F) {
             std::vector<int> out;
             for (const auto& c : F.map->cells) out.push_back(c.return_time);
             return out;
           })
      .def("certify_markov", [](const PyInduced& F, int samples) { return certify_markov(*F.map, samples).passed; },
           py::arg("samples") = 64)
      .def("to_json", [](const PyInduced& F) { return to_py(to_json(*F.map)); });

  m.def("build_induced", &build_induced, py::arg("map"), py::arg("source_point"), py::arg("delta_search") = 0.125,
        py::arg("r_over_delta") = 0.125, py::arg("alpha_rate") = 0.125, py::arg("max_R") = 8, py::arg("cell_budget") = 2048,
        py::arg("threads") = 0);

  m.def(
      "sample_mu_a",
      [](const PyInduced& F, std::size_t n, std::uint64_t seed, const std::string& family, double param, int cascade_depth,
         int threads) {
        auto measure = make_tower_measure(F.map, make_weights(*F.map, weight_family_from_string(family), param), cascade_depth);
        const auto s = sample_mu_a(measure, n, seed, threads);
        std::vector<std::vector<double>> points;
        points.reserve(s.points.size());
        for (const auto& p : s.points) points.push_back(coords_of(p));
        return py::make_tuple(points, s.cells);
      },
      py::arg("induced"), py::arg("n"), py::arg("seed") = 1, py::arg("family") = "geometric", py::arg("param") = 0.5,
      py::arg("cascade_depth") = 3, py::arg("threads") = 0);

  m.def(
      "lyapunov_lebesgue",
      [](const PyMap& f, int n_iterates, std::size_t n_samples, std::uint64_t seed) {
        return lyapunov_exponents(*f.map, lebesgue_sampler(f.map->dimension()), n_iterates, n_samples, seed).exponents;
      },
      py::arg("map"), py::arg("n_iterates") = 1000, py::arg("n_samples") = 16, py::arg("seed") = 1);

  m.def(
      "run_experiment",
      [](const py::object& config) {
        const auto r = run_experiment(config_from_json(from_py(config)));
        py::dict out;
        out["exit_code"] = r.exit_code;
        out["summary"] = to_py(r.summary);
        py::dict reports;
        for (const auto& [stage, rep] : r.reports) reports[py::str(stage)] = to_py(rep);
        out["reports"] = reports;
        out["diagnostic"] = r.diagnostic;
        return out;
      },
      py::arg("config"));
}
