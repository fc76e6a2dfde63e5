#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lensfactory/merit.hpp"

namespace lf {

struct VirtualImage {
  double eye_focal_length = 17.0;  // mm
  double eye_relief = 20.0;        // mm
  double target_fov = 30.0;        // degrees
};

/// What the user asks for. object_distance <= 0 means an object at infinity.
struct DesignSpec {
  double object_distance = 0;  // mm from the first vertex
  double object_tilt = 0;      // degrees
  double fov = 40.0;           // full diagonal field, degrees
  double fov_tolerance = 0.05;
  double f_number = 5.6;
  SensorFormat sensor;
  double pixel_pitch_um = 4.3;
  double flange_min = 0;    // mm, allowed back focal distance
  double flange_max = 1e3;  // mm
  int max_elements = 6;
  double max_length = 200;  // mm, first vertex to last surface
  double max_cost = 1e4;
  std::optional<VirtualImage> virtual_image;
  MeritMode stage1_mode = MeritMode::Spot;
  double vignetting_threshold = 0.3;  // relative illumination at full field

  bool at_infinity() const { return !(object_distance > 0); }
  /// Focal length that puts the sensor corner at the half field.
  double target_efl() const;
  /// Merit defaults for this spec: fields at 0, 1/2 and the full half-field.
  MeritConfig merit() const;
  /// Sensor, object conjugate and tilt applied to a lens layout.
  void apply_to(LensSystem& system) const;
};

enum class Severity { Info, Warning, Error };
std::string_view to_string(Severity s);

struct Diagnostic {
  std::string field;
  Severity severity = Severity::Error;
  std::string message;
};

std::vector<Diagnostic> validate(const DesignSpec& spec);

struct Polyline {
  std::string label;
  std::vector<Vec2> points;  // (z, y) in mm
};

/// First-order layout: thin lens at z = 0 with the object to the left.
struct Sketch {
  double efl = 0;
  double image_distance = 0;
  double entrance_pupil_diameter = 0;
  double sensor_tilt = 0;  // degrees
  std::vector<Polyline> planes;  // object, lens, sensor, and eye when present
  std::vector<Polyline> rays;    // marginal and chief rays
};

struct SketchResult {
  std::vector<Diagnostic> diagnostics;
  std::optional<Sketch> sketch;  // absent when any diagnostic is an error
};

SketchResult validate_and_sketch(const DesignSpec& spec);

}  // namespace lf
