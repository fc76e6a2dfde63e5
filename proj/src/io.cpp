#include "lensfactory/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lensfactory/error.hpp"

namespace lf {

namespace {

Json vec(const Vec2& v) { return Json::array({v.x, v.y}); }
Json vec(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }
Vec3 vec3(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

template <class E, class Parse>
void read_enum(const Json& j, const char* key, E& out, Parse parse) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  const auto v = parse(it->template get<std::string>());
  if (!v) throw ValidationError(std::string("unknown ") + key + " '" + it->template get<std::string>() + "'");
  out = *v;
}

// Runs a reader, turning JSON type errors into ValidationError.
template <class F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

void require_object(const Json& j, const char* what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
}

Json to_json(const Emitter& e) {
  if (e.at_infinity) return {{"direction", vec(e.direction)}};
  return {{"point", vec(e.point)}};
}

Emitter emitter_from_json(const Json& j) {
  if (j.contains("point")) return point_source(vec3(j.at("point")));
  Emitter e;
  e.direction = vec3(j.at("direction"));
  return e;
}

}  // namespace

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
    if (!out.flush()) throw Error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// --- Specs and configs ------------------------------------------------------------------

Json to_json(const SensorFormat& s) { return {{"name", s.name}, {"width", s.width}, {"height", s.height}}; }

SensorFormat sensor_from_json(const Json& j) {
  return guarded("sensor", [&] {
    require_object(j, "sensor");
    SensorFormat s;
    read(j, "name", s.name);
    read(j, "width", s.width);
    read(j, "height", s.height);
    return s;
  });
}

Json to_json(const DesignSpec& s) {
  Json j{{"object_distance", s.object_distance},
         {"object_tilt", s.object_tilt},
         {"fov", s.fov},
         {"fov_tolerance", s.fov_tolerance},
         {"f_number", s.f_number},
         {"sensor", to_json(s.sensor)},
         {"pixel_pitch_um", s.pixel_pitch_um},
         {"flange_range", {s.flange_min, s.flange_max}},
         {"max_elements", s.max_elements},
         {"max_length", s.max_length},
         {"max_cost", s.max_cost},
         {"stage1_mode", to_string(s.stage1_mode)},
         {"vignetting_threshold", s.vignetting_threshold},
         {"virtual_image", nullptr}};
  if (s.virtual_image)
    j["virtual_image"] = {{"eye_focal_length", s.virtual_image->eye_focal_length},
                          {"eye_relief", s.virtual_image->eye_relief},
                          {"target_fov", s.virtual_image->target_fov}};
  return j;
}

DesignSpec spec_from_json(const Json& j) {
  return guarded("spec", [&] {
    require_object(j, "spec");
    DesignSpec s;
    read(j, "object_distance", s.object_distance);
    read(j, "object_tilt", s.object_tilt);
    read(j, "fov", s.fov);
    read(j, "fov_tolerance", s.fov_tolerance);
    read(j, "f_number", s.f_number);
    if (j.contains("sensor")) s.sensor = sensor_from_json(j.at("sensor"));
    read(j, "pixel_pitch_um", s.pixel_pitch_um);
    if (auto it = j.find("flange_range"); it != j.end()) {
      s.flange_min = it->at(0).get<double>();
      s.flange_max = it->at(1).get<double>();
    }
    read(j, "max_elements", s.max_elements);
    read(j, "max_length", s.max_length);
    read(j, "max_cost", s.max_cost);
    read_enum(j, "stage1_mode", s.stage1_mode, parse_merit_mode);
    read(j, "vignetting_threshold", s.vignetting_threshold);
    if (auto it = j.find("virtual_image"); it != j.end() && !it->is_null()) {
      VirtualImage v;
      read(*it, "eye_focal_length", v.eye_focal_length);
      read(*it, "eye_relief", v.eye_relief);
      read(*it, "target_fov", v.target_fov);
      s.virtual_image = v;
    }
    return s;
  });
}

Json to_json(const EvolutionConfig& c) {
  return {{"strategy", to_string(c.strategy)},
          {"pool_size", c.pool_size},
          {"budget", c.budget},
          {"max_draws", c.max_draws},
          {"seed_elements", c.seed_elements},
          {"seed", c.seed},
          {"split",
           {{"alpha", c.split.alpha},
            {"diameter_tol", c.split.diameter_tol},
            {"curvature_rule", c.split.curvature_rule},
            {"power_ranked", c.split.power_ranked},
            {"flips", c.split.flips},
            {"pair_gap", c.split.pair_gap}}},
          {"enumeration", {{"tolerance", c.enumeration.tolerance}, {"flips", c.enumeration.flips}}}};
}

EvolutionConfig evolution_from_json(const Json& j) {
  return guarded("evolution", [&] {
    require_object(j, "evolution");
    EvolutionConfig c;
    read_enum(j, "strategy", c.strategy, parse_strategy);
    read(j, "pool_size", c.pool_size);
    read(j, "budget", c.budget);
    read(j, "max_draws", c.max_draws);
    read(j, "seed_elements", c.seed_elements);
    read(j, "seed", c.seed);
    if (auto it = j.find("split"); it != j.end()) {
      read(*it, "alpha", c.split.alpha);
      read(*it, "diameter_tol", c.split.diameter_tol);
      read(*it, "curvature_rule", c.split.curvature_rule);
      read(*it, "power_ranked", c.split.power_ranked);
      read(*it, "flips", c.split.flips);
      read(*it, "pair_gap", c.split.pair_gap);
    }
    if (auto it = j.find("enumeration"); it != j.end()) {
      read(*it, "tolerance", c.enumeration.tolerance);
      read(*it, "flips", c.enumeration.flips);
    }
    return c;
  });
}

Json to_json(const MeritConfig& c) {
  Json fields = Json::array();
  for (const auto& e : c.fields.emitters) fields.push_back(to_json(e));
  return {{"mode", to_string(c.mode)},
          {"fields", fields},
          {"wavelengths", c.wavelengths.channels},
          {"pupil", {{"rings", c.pupil.rings}, {"spokes", c.pupil.spokes}}},
          {"psf_window_um", c.psf_window_um},
          {"psf_grid", c.psf_grid},
          {"mtf_cutoff", c.mtf_cutoff},
          {"pixel_pitch_um", c.pixel_pitch_um},
          {"max_pupil_grid", c.max_pupil_grid},
          {"fit_degree", c.fit_degree}};
}

MeritConfig merit_from_json(const Json& j) {
  return guarded("merit", [&] {
    require_object(j, "merit");
    MeritConfig c;
    read_enum(j, "mode", c.mode, parse_merit_mode);
    if (auto it = j.find("fields"); it != j.end() && !it->is_null())
      for (const auto& e : *it) c.fields.emitters.push_back(emitter_from_json(e));
    read(j, "wavelengths", c.wavelengths.channels);
    if (auto it = j.find("pupil"); it != j.end()) {
      read(*it, "rings", c.pupil.rings);
      read(*it, "spokes", c.pupil.spokes);
    }
    read(j, "psf_window_um", c.psf_window_um);
    read(j, "psf_grid", c.psf_grid);
    read(j, "mtf_cutoff", c.mtf_cutoff);
    read(j, "pixel_pitch_um", c.pixel_pitch_um);
    read(j, "max_pupil_grid", c.max_pupil_grid);
    read(j, "fit_degree", c.fit_degree);
    c.validate();
    c.wavelengths.validate();
    return c;
  });
}

Json to_json(const ToleranceConfig& c) {
  return {{"element_sigma_um", c.element_sigma_um},
          {"element_cap_um", c.element_cap_um},
          {"sensor_sigma_um", c.sensor_sigma_um},
          {"sensor_cap_um", c.sensor_cap_um},
          {"runs", c.runs},
          {"seed", c.seed},
          {"refocus_mode", to_string(c.refocus_mode)}};
}

ToleranceConfig tolerance_config_from_json(const Json& j) {
  return guarded("tolerance", [&] {
    require_object(j, "tolerance");
    ToleranceConfig c;
    read(j, "element_sigma_um", c.element_sigma_um);
    read(j, "element_cap_um", c.element_cap_um);
    read(j, "sensor_sigma_um", c.sensor_sigma_um);
    read(j, "sensor_cap_um", c.sensor_cap_um);
    read(j, "runs", c.runs);
    read(j, "seed", c.seed);
    read(j, "workers", c.workers);
    read_enum(j, "refocus_mode", c.refocus_mode, parse_merit_mode);
    c.validate();
    return c;
  });
}

// --- Systems ---------------------------------------------------------------------------

Json to_json(const LensElement& e) {
  Json glasses = Json::array();
  for (const auto& g : e.glasses) glasses.push_back({{"name", g.name}, {"n_d", g.n_d}, {"v_d", g.v_d}});
  return {{"stock_id", e.stock_id},     {"vendor", e.vendor},   {"kind", to_string(e.kind)},
          {"diameter", e.diameter},     {"focal_length", e.focal_length}, {"radii", e.radii},
          {"thicknesses", e.thicknesses}, {"glasses", glasses}, {"cost", e.cost},
          {"coating", e.coating}};
}

Json to_json(const LensSystem& s) {
  Json comps = Json::array();
  for (const auto& c : s.components) {
    if (const auto* e = std::get_if<ElementInstance>(&c))
      comps.push_back({{"type", "element"}, {"stock_id", e->element->stock_id}, {"flipped", e->flipped}});
    else if (const auto* st = std::get_if<Stop>(&c))
      comps.push_back({{"type", "stop"}, {"aperture_radius", st->aperture_radius}});
    else {
      const auto& il = std::get<IdealLens>(c);
      comps.push_back({{"type", "ideal"}, {"focal_length", il.focal_length}, {"semi_aperture", il.semi_aperture}});
    }
  }
  Json j{{"components", comps}, {"gaps", s.gaps}, {"sensor_gap", s.sensor_gap}, {"sensor", to_json(s.sensor)},
         {"tilt", nullptr}};
  if (s.tilt)
    j["tilt"] = {{"object_plane_tilt", s.tilt->object_plane_tilt},
                 {"object_distance", s.tilt->object_distance},
                 {"sensor_tilt", s.tilt->sensor_tilt}};
  if (!s.decenters.empty()) {
    Json d = Json::array();
    for (const auto& x : s.decenters) d.push_back({x.dx, x.dy});
    j["decenters"] = d;
  }
  if (!s.frozen_gaps.empty()) j["frozen_gaps"] = s.frozen_gaps;
  return j;
}

LensSystem system_from_json(const Json& j, const Catalog& catalog) {
  return guarded("system", [&] {
    require_object(j, "system");
    LensSystem s;
    for (const auto& c : j.at("components")) {
      const std::string type = c.at("type").get<std::string>();
      if (type == "element") {
        const std::string id = c.at("stock_id").get<std::string>();
        ElementPtr e = catalog.find(id);
        if (!e) throw NotFound("stock id '" + id + "' is not in the catalog");
        s.components.emplace_back(make_instance(std::move(e), c.value("flipped", false)));
      } else if (type == "stop") {
        s.components.emplace_back(Stop{c.at("aperture_radius").get<double>()});
      } else if (type == "ideal") {
        s.components.emplace_back(IdealLens{c.at("focal_length").get<double>(), c.value("semi_aperture", 50.0)});
      } else {
        throw ValidationError("unknown component type '" + type + "'");
      }
    }
    read(j, "gaps", s.gaps);
    read(j, "sensor_gap", s.sensor_gap);
    if (j.contains("sensor")) s.sensor = sensor_from_json(j.at("sensor"));
    if (auto it = j.find("tilt"); it != j.end() && !it->is_null()) {
      TiltGeometry t;
      read(*it, "object_plane_tilt", t.object_plane_tilt);
      read(*it, "object_distance", t.object_distance);
      read(*it, "sensor_tilt", t.sensor_tilt);
      s.tilt = t;
    }
    if (auto it = j.find("decenters"); it != j.end())
      for (const auto& d : *it) s.decenters.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
    read(j, "frozen_gaps", s.frozen_gaps);
    s.validate();
    return s;
  });
}

// --- Reports, candidates, pools ---------------------------------------------------------

Json to_json(const MeritReport& r) {
  Json pairs = Json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"emitter", p.emitter},
                     {"channel", p.channel},
                     {"spot_rms_um", p.spot_rms_um},
                     {"opd_rms_waves", p.opd_rms_waves},
                     {"mtf_area", p.mtf_area},
                     {"mtf_area_tangential", p.mtf_area_tangential},
                     {"mtf_area_sagittal", p.mtf_area_sagittal},
                     {"mtf50", p.mtf50},
                     {"mtf50_lwph", p.mtf50_lwph},
                     {"mtf50_flagged", p.mtf50_flagged}});
  return {{"mode", to_string(r.mode)},
          {"sensor_gap", r.sensor_gap},
          {"sensor_tilt", r.sensor_tilt},
          {"objective", r.objective},
          {"mtf_area", r.mtf_area},
          {"mtf50", r.mtf50},
          {"mtf50_lwph", r.mtf50_lwph},
          {"pairs", pairs},
          {"relative_illumination", r.relative_illumination}};
}

MeritReport report_from_json(const Json& j) {
  return guarded("report", [&] {
    MeritReport r;
    read_enum(j, "mode", r.mode, parse_merit_mode);
    read(j, "sensor_gap", r.sensor_gap);
    read(j, "sensor_tilt", r.sensor_tilt);
    read(j, "objective", r.objective);
    read(j, "mtf_area", r.mtf_area);
    read(j, "mtf50", r.mtf50);
    read(j, "mtf50_lwph", r.mtf50_lwph);
    for (const auto& p : j.at("pairs")) {
      PairScore s;
      read(p, "emitter", s.emitter);
      read(p, "channel", s.channel);
      read(p, "spot_rms_um", s.spot_rms_um);
      read(p, "opd_rms_waves", s.opd_rms_waves);
      read(p, "mtf_area", s.mtf_area);
      read(p, "mtf_area_tangential", s.mtf_area_tangential);
      read(p, "mtf_area_sagittal", s.mtf_area_sagittal);
      read(p, "mtf50", s.mtf50);
      read(p, "mtf50_lwph", s.mtf50_lwph);
      read(p, "mtf50_flagged", s.mtf50_flagged);
      r.pairs.push_back(s);
    }
    read(j, "relative_illumination", r.relative_illumination);
    return r;
  });
}

Json to_json(const Candidate& c) {
  return {{"key", c.key},
          {"stock_ids", c.stock_ids},
          {"iteration", c.iteration},
          {"score", c.score()},
          {"start_gaps", c.start_gaps},
          {"system", to_json(c.system)},
          {"report", to_json(c.report)}};
}

Candidate candidate_from_json(const Json& j, const Catalog& catalog) {
  return guarded("candidate", [&] {
    Candidate c;
    c.system = system_from_json(j.at("system"), catalog);
    c.report = report_from_json(j.at("report"));
    read(j, "key", c.key);
    read(j, "stock_ids", c.stock_ids);
    read(j, "start_gaps", c.start_gaps);
    read(j, "iteration", c.iteration);
    return c;
  });
}

Json to_json(const CandidatePool& p) {
  Json cands = Json::array();
  for (const auto& c : p.candidates) cands.push_back(to_json(c));
  return {{"iteration", p.iteration}, {"stagnant", p.stagnant}, {"candidates", cands}};
}

CandidatePool pool_from_json(const Json& j, const Catalog& catalog) {
  return guarded("pool", [&] {
    CandidatePool p;
    read(j, "iteration", p.iteration);
    read(j, "stagnant", p.stagnant);
    for (const auto& c : j.at("candidates")) p.candidates.push_back(candidate_from_json(c, catalog));
    return p;
  });
}

Json to_json(const EvolutionStats& s) {
  return {{"draws", s.draws},
          {"proposals", s.proposals},
          {"pruned", s.pruned},
          {"optimized", s.optimized},
          {"feasible", s.feasible}};
}

// --- Tolerance ---------------------------------------------------------------------------

Json to_json(const Distribution& d) {
  return {{"p5", d.p5}, {"p25", d.p25}, {"p50", d.p50}, {"p75", d.p75}, {"p95", d.p95}, {"mean", d.mean}};
}

Json to_json(const ToleranceReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"emitter", e.emitter},
                       {"channel", e.channel},
                       {"nominal_mtf50", e.nominal_mtf50},
                       {"mtf50", to_json(e.mtf50)}});
  return {{"runs", r.runs},
          {"failed", r.failed},
          {"clamped", r.clamped},
          {"nominal", to_json(r.nominal)},
          {"entries", entries}};
}

// --- Grids, curves, tables, sketches --------------------------------------------------------

Json to_json(const PsfGrid& g) {
  return {{"n", g.n},
          {"window_um", g.window_um},
          {"pixel_um", g.pixel_um()},
          {"wavelength_nm", g.wavelength_nm},
          {"center_mm", vec(g.center_mm)},
          {"values", g.values}};
}

Json to_json(const MtfCurve& c) {
  return {{"frequency", c.frequency}, {"tangential", c.tangential}, {"sagittal", c.sagittal}};
}

Json to_json(const CalibrationTable& t) {
  Json entries = Json::array();
  for (const auto& e : t.entries) {
    Json image = Json::array(), disp = Json::array(), lat = Json::array();
    for (const auto& v : e.image) image.push_back(vec(v));
    for (const auto& v : e.displacement) disp.push_back(vec(v));
    for (const auto& v : e.lateral_color) lat.push_back(vec(v));
    entries.push_back({{"field", vec(e.field)},
                       {"predicted", vec(e.predicted)},
                       {"image", image},
                       {"displacement", disp},
                       {"lateral_color", lat},
                       {"distortion", vec(e.distortion)}});
  }
  return {{"density", t.density},
          {"reference_channel", t.reference_channel},
          {"channel_wavelengths", t.channel_wavelengths},
          {"entries", entries}};
}

Json to_json(const SketchResult& r) {
  Json diags = Json::array();
  for (const auto& d : r.diagnostics)
    diags.push_back({{"field", d.field}, {"severity", to_string(d.severity)}, {"message", d.message}});
  Json j{{"diagnostics", diags}, {"sketch", nullptr}};
  if (r.sketch) {
    const auto lines = [](const std::vector<Polyline>& v) {
      Json a = Json::array();
      for (const auto& p : v) {
        Json pts = Json::array();
        for (const auto& q : p.points) pts.push_back(vec(q));
        a.push_back({{"label", p.label}, {"points", pts}});
      }
      return a;
    };
    j["sketch"] = {{"efl", r.sketch->efl},
                   {"image_distance", r.sketch->image_distance},
                   {"entrance_pupil_diameter", r.sketch->entrance_pupil_diameter},
                   {"sensor_tilt", r.sketch->sensor_tilt},
                   {"planes", lines(r.sketch->planes)},
                   {"rays", lines(r.sketch->rays)}};
  }
  return j;
}

Json to_json(const TraceRecord& r) {
  return {{"stage", to_string(r.stage)},
          {"iteration", r.iteration},
          {"objective", r.objective},
          {"gaps", r.gaps},
          {"sensor_gap", r.sensor_gap}};
}

std::string psf_text(const PsfGrid& g) {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "# n %d window_um %.9g wavelength_nm %.9g\n", g.n, g.window_um, g.wavelength_nm);
  out += buf;
  for (int y = 0; y < g.n; ++y) {
    for (int x = 0; x < g.n; ++x) {
      std::snprintf(buf, sizeof buf, x ? " %.9g" : "%.9g", g.at(x, y));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace lf
