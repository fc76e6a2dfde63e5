#include "lensfactory/design.hpp"

#include <cmath>
#include <numbers>

namespace lf {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void check(std::vector<Diagnostic>& out, bool ok, const char* field, const std::string& message,
           Severity severity = Severity::Error) {
  if (!ok) out.push_back({field, severity, message});
}

Polyline segment(std::string label, Vec2 a, Vec2 b) { return {std::move(label), {a, b}}; }

// Plane of half-height h through (z, 0), rotated by tilt_deg toward +z at +y.
Polyline tilted_plane(std::string label, double z, double h, double tilt_deg) {
  const double s = std::sin(tilt_deg * kDeg), c = std::cos(tilt_deg * kDeg);
  return segment(std::move(label), {z - h * s, -h * c}, {z + h * s, h * c});
}

}  // namespace

double DesignSpec::target_efl() const { return sensor.diagonal() / 2.0 / std::tan(fov / 2.0 * kDeg); }

MeritConfig DesignSpec::merit() const {
  MeritConfig c;
  c.mode = stage1_mode;
  c.fields = relative_fields(fov / 2.0);
  c.pixel_pitch_um = pixel_pitch_um;
  return c;
}

void DesignSpec::apply_to(LensSystem& system) const {
  system.sensor = sensor;
  if (at_infinity()) {
    system.tilt.reset();
    return;
  }
  TiltGeometry t{object_tilt, object_distance, 0.0};
  if (object_tilt != 0) t.sensor_tilt = scheimpflug_sensor_tilt(system, t);
  system.tilt = t;
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Error: return "error";
  }
  return "error";
}

std::vector<Diagnostic> validate(const DesignSpec& s) {
  std::vector<Diagnostic> d;
  check(d, std::isfinite(s.fov) && s.fov > 0 && s.fov < 180, "fov", "must be in (0, 180) degrees");
  check(d, s.fov_tolerance > 0 && s.fov_tolerance < 1, "fov_tolerance", "must be in (0, 1)");
  check(d, std::isfinite(s.f_number) && s.f_number > 0, "f_number", "must be > 0");
  if (s.f_number > 0) check(d, s.f_number >= 0.8, "f_number", "below 0.8 is not reachable", Severity::Warning);
  check(d, s.sensor.width > 0 && s.sensor.height > 0, "sensor", "width and height must be > 0");
  check(d, s.pixel_pitch_um > 0, "pixel_pitch_um", "must be > 0");
  check(d, s.flange_min >= 0, "flange_range", "minimum must be >= 0");
  check(d, s.flange_min <= s.flange_max, "flange_range", "minimum exceeds maximum");
  check(d, s.max_elements >= 1, "max_elements", "must be >= 1");
  check(d, s.max_length > 0, "max_length", "must be > 0");
  check(d, s.max_cost > 0, "max_cost", "must be > 0");
  check(d, s.object_tilt > -90 && s.object_tilt < 90, "object_tilt", "must be in (-90, 90) degrees");
  check(d, s.object_tilt == 0 || !s.at_infinity(), "object_tilt", "a tilted object needs a finite distance");
  check(d, s.vignetting_threshold >= 0 && s.vignetting_threshold <= 1, "vignetting_threshold",
        "must be in [0, 1]");
  check(d, s.stage1_mode != MeritMode::Mtf, "stage1_mode", "must be spot or opd");
  if (s.virtual_image) {
    check(d, s.virtual_image->eye_focal_length > 0, "virtual_image.eye_focal_length", "must be > 0");
    check(d, s.virtual_image->eye_relief >= 0, "virtual_image.eye_relief", "must be >= 0");
    check(d, s.virtual_image->target_fov > 0 && s.virtual_image->target_fov < 180, "virtual_image.target_fov",
          "must be in (0, 180) degrees");
  }
  bool fov_ok = true;
  for (const auto& x : d)
    if (x.field == "fov" || x.field == "sensor") fov_ok = false;
  if (fov_ok && !s.at_infinity())
    check(d, s.object_distance > s.target_efl(), "object_distance",
          "object inside the focal length has no real image");
  return d;
}

SketchResult validate_and_sketch(const DesignSpec& spec) {
  SketchResult out;
  out.diagnostics = validate(spec);
  for (const auto& d : out.diagnostics)
    if (d.severity == Severity::Error) return out;

  Sketch k;
  const double f = spec.target_efl();
  const double half = std::tan(spec.fov / 2 * kDeg);
  const double image_half = spec.sensor.diagonal() / 2;
  k.efl = f;
  k.entrance_pupil_diameter = f / spec.f_number;
  const double a = k.entrance_pupil_diameter / 2;

  if (spec.at_infinity()) {
    k.image_distance = f;
    const double z0 = -1.5 * f;
    k.planes.push_back(segment("object (infinity)", {z0, -image_half}, {z0, image_half}));
    k.rays.push_back({"marginal", {{z0, a}, {0, a}, {f, 0}}});
    k.rays.push_back({"chief", {{z0, -z0 * half}, {0, 0}, {f, -f * half}}});
  } else {
    const double s = spec.object_distance;
    const double si = 1.0 / (1.0 / f - 1.0 / s);
    const double m = si / s;
    k.image_distance = si;
    k.sensor_tilt = std::atan(m * std::tan(spec.object_tilt * kDeg)) / kDeg;
    k.planes.push_back(tilted_plane("object", -s, image_half / m, spec.object_tilt));
    k.rays.push_back({"marginal", {{-s, 0}, {0, a}, {si, 0}}});
    k.rays.push_back({"chief", {{-s, image_half / m}, {0, 0}, {si, -image_half}}});
  }
  k.planes.push_back(segment("lens", {0, -1.2 * a}, {0, 1.2 * a}));
  k.planes.push_back(tilted_plane("sensor", k.image_distance, image_half, k.sensor_tilt));
  if (spec.virtual_image) {
    const double z = spec.virtual_image->eye_relief;
    const double h = spec.virtual_image->eye_focal_length * std::tan(spec.virtual_image->target_fov / 2 * kDeg);
    k.planes.push_back(segment("eye", {z, -h}, {z, h}));
  }
  out.sketch = std::move(k);
  return out;
}

}  // namespace lf
