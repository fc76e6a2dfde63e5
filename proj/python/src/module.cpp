#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "lensfactory/api.hpp"

namespace py = pybind11;
using namespace lf;

namespace {

std::string synthetic_catalog_csv(std::uint64_t seed, std::optional<int> positive, std::optional<int> negative) {
  SyntheticCounts counts;
  if (positive || negative)
    counts = SyntheticCounts::with_totals(positive.value_or(counts.positive()), negative.value_or(counts.negative()));
  return to_catalog_csv(generate_synthetic_rows(seed, counts));
}

std::string catalog_summary(const std::string& path) {
  const Catalog c = load_catalog(path);
  return dump({{"schema_version", kSchemaVersion},
               {"elements", c.size()},
               {"positive", c.positive_count()},
               {"negative", c.negative_count()}});
}

// Paraxial data and the merit report of a system at its own sensor gap.
std::string evaluate_system(const std::string& system_json, const std::string& catalog_path,
                            const std::string& merit_json) {
  const Catalog catalog = catalog_path.empty() ? generate_synthetic_catalog(7) : load_catalog(catalog_path);
  const LensSystem system = system_from_json(Json::parse(system_json), catalog);
  const MeritConfig merit = merit_json.empty() ? MeritConfig{} : merit_from_json(Json::parse(merit_json));
  const ExitRayCache cache(system, merit, true);
  const ParaxialResult& px = cache.paraxial();
  return dump({{"schema_version", kSchemaVersion},
               {"efl", px.efl},
               {"bfl", px.bfl},
               {"f_number", px.efl / px.entrance_pupil_diameter},
               {"report", to_json(evaluate_report(cache, merit, system.sensor_gap, system.sensor_tilt()))}});
}

}  // namespace

PYBIND11_MODULE(_lensfactory, m) {
  m.doc() = "Lens design from stock catalog elements";
  m.attr("schema_version") = kSchemaVersion;

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def("lensmaker_focal_length", &lensmaker_focal_length, py::arg("r1"), py::arg("r2"), py::arg("thickness"),
        py::arg("n"), "Thick-lens focal length; a zero radius is flat.");
  m.def("synthetic_catalog_csv", &synthetic_catalog_csv, py::arg("seed"), py::arg("positive") = py::none(),
        py::arg("negative") = py::none());
  m.def("catalog_summary", &catalog_summary, py::arg("path"));
  m.def("evaluate_system", &evaluate_system, py::arg("system_json"), py::arg("catalog_path") = "",
        py::arg("merit_json") = "", py::call_guard<py::gil_scoped_release>());

  py::class_<Api>(m, "Api")
      .def(py::init<std::string>(), py::arg("root"))
      .def(
          "handle",
          [](Api& api, const std::string& method, const std::string& path, const Query& query,
             const std::string& body) {
            ApiResponse r;
            {
              py::gil_scoped_release release;
              r = api.handle(method, path, query, body);
            }
            return py::make_tuple(r.status, r.content_type, r.body);
          },
          py::arg("method"), py::arg("path"), py::arg("query") = Query{}, py::arg("body") = "",
          "Returns (status, content_type, body).");
}
