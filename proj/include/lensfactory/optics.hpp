#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lensfactory/catalog.hpp"
#include "lensfactory/vec.hpp"

namespace lf {

/// A catalog element placed in a system. Use make_instance() so that flipping
/// a symmetric element is normalized away.
struct ElementInstance {
  ElementPtr element;
  bool flipped = false;
};

ElementInstance make_instance(ElementPtr element, bool flipped = false);

struct Stop {
  double aperture_radius = 1.0;  // mm
};

/// Phase-perfect thin lens: maps every plane wave onto a point of its focal plane.
struct IdealLens {
  double focal_length = 17.0;   // mm
  double semi_aperture = 50.0;  // mm
};

IdealLens ideal_lens_surface(double focal_length, double semi_aperture = 50.0);

using Component = std::variant<ElementInstance, Stop, IdealLens>;

struct SensorFormat {
  double width = 17.3;   // mm
  double height = 13.0;  // mm
  std::string name = "micro43";

  double diagonal() const;
  static SensorFormat micro_four_thirds() { return {17.3, 13.0, "micro43"}; }
};

struct TiltGeometry {
  double object_plane_tilt = 0;  // degrees about the sensor x axis
  double object_distance = 0;    // mm, from the first vertex
  double sensor_tilt = 0;        // degrees, optimizable
};

struct Decenter {
  double dx = 0;
  double dy = 0;
};

/// Ordered components with air gaps. The first vertex sits at z = 0 and light
/// travels toward +z.
struct LensSystem {
  std::vector<Component> components;
  std::vector<double> gaps;  // between adjacent components, size k - 1
  double sensor_gap = 0;     // last optical surface to sensor
  SensorFormat sensor;
  std::optional<TiltGeometry> tilt;
  std::vector<Decenter> decenters;  // empty or one per component
  std::vector<bool> frozen_gaps;    // empty or one per gap; frozen gaps are not optimized

  std::size_t stop_index() const;
  const Stop& stop() const;
  Stop& stop();
  std::size_t lens_count() const;
  /// Component indices of the catalog elements, in order.
  std::vector<std::size_t> lens_indices() const;
  bool gap_frozen(std::size_t i) const { return i < frozen_gaps.size() && frozen_gaps[i]; }
  double sensor_tilt() const { return tilt ? tilt->sensor_tilt : 0.0; }
  double total_cost() const;
  /// First vertex to last optical surface, mm.
  double length() const;
  double max_diameter() const;

  /// Throws ValidationError on a broken invariant.
  void validate() const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction{0, 0, 1};
  double wavelength = kLambdaD;  // nm
  double path = 0;               // optical path length, mm
  bool alive = true;
};

enum class SurfaceKind { Refract, Stop, Ideal };

struct Surface {
  SurfaceKind kind = SurfaceKind::Refract;
  double z = 0;          // vertex position
  double curvature = 0;  // 1/R, mm^-1
  double semi_aperture = 0;
  double n_before = 1;
  double n_after = 1;
  double focal = 0;  // ideal lens only
  double dx = 0, dy = 0;
  double phase_offset = 0;  // ideal lens only; keeps its phase term positive
  std::size_t component = 0;
};

struct SensorPlane {
  Vec3 center;
  Vec3 normal{0, 0, 1};
  Vec3 e1{1, 0, 0};
  Vec3 e2{0, 1, 0};
};

/// Plane through (0, 0, z) tilted about x: in-plane axes are x and (0, cos t, sin t).
SensorPlane make_sensor_plane(double z, double tilt_deg);
/// Point (x, y) of a plane through (0, 0, z) parametrized like make_sensor_plane.
Vec3 tilted_plane_point(double z, double tilt_deg, double x, double y);
inline Vec2 sensor_coords(const SensorPlane& s, const Vec3& p) {
  const Vec3 d = p - s.center;
  return {dot(d, s.e1), dot(d, s.e2)};
}

/// A system flattened to surfaces at one wavelength.
class TraceStack {
 public:
  TraceStack(const LensSystem& system, double wavelength_nm);

  std::span<const Surface> surfaces() const { return surfaces_; }
  std::size_t stop_surface() const { return stop_surface_; }
  double wavelength() const { return wavelength_; }
  double first_z() const { return 0.0; }
  double last_z() const { return surfaces_.back().z; }
  const SensorPlane& sensor() const { return sensor_; }
  void set_sensor(double sensor_gap, double tilt_deg);

 private:
  std::vector<Surface> surfaces_;
  std::size_t stop_surface_ = 0;
  double wavelength_;
  SensorPlane sensor_;
};

/// Vector Snell refraction of unit direction d at unit normal n (any orientation).
/// Empty on total internal reflection.
std::optional<Vec3> refract(const Vec3& d, const Vec3& n, double n1, double n2);

/// Intersects and refracts one surface in place. Returns false (and kills the ray)
/// on a miss, clipping, or TIR. With clip = false apertures are ignored.
bool trace_surface(const Surface& s, Ray& ray, bool clip = true);

/// Traces surfaces [0, end) in order.
void trace_surfaces(const TraceStack& stack, Ray& ray, std::size_t end, bool clip = true);
inline void trace_to_last_surface(const TraceStack& stack, Ray& ray) {
  trace_surfaces(stack, ray, stack.surfaces().size());
}
/// Moves a ray that left the last surface onto the sensor plane.
void propagate_to_sensor(const SensorPlane& sensor, Ray& ray);

/// Full sequential trace to the sensor plane.
Ray trace_ray(const LensSystem& system, Ray ray);

struct ParaxialResult {
  double efl = 0;
  double bfl = 0;  // last surface to rear focal point
  double ffl = 0;  // front focal point to first surface
  double front_principal_z = 0;
  double rear_principal_z = 0;
  double entrance_pupil_z = 0;
  double entrance_pupil_diameter = 0;
  double exit_pupil_z = 0;
  double exit_pupil_diameter = 0;
  double stop_height_ratio = 1;  // stop height of an axial parallel ray of unit height
  double first_z = 0;
  double last_z = 0;
  bool afocal = false;
};

/// First-order (y, nu) analysis at the given wavelength. Afocal systems are flagged, not thrown.
ParaxialResult paraxial_trace(const LensSystem& system, double wavelength_nm = kLambdaD);

/// Axis crossing of a paraxial marginal ray behind the last surface, or empty when the
/// image is virtual or at infinity. object_distance <= 0 means infinity.
std::optional<double> paraxial_image_distance(const LensSystem& system, double object_distance = 0,
                                              double wavelength_nm = kLambdaD);

enum class FovAxis { Diagonal, Horizontal, Vertical };

/// Full field of view in degrees, from a real chief-ray trace to the sensor edge along the
/// chosen axis. Falls back to the paraxial value if the chief ray cannot be traced.
/// Throws AfocalError.
double system_fov(const LensSystem& system, FovAxis axis = FovAxis::Diagonal);

/// Sets the stop radius for the target f-number (efl / entrance-pupil diameter).
/// Throws UnreachableFNumber when any surface would clip the axial bundle.
LensSystem set_fnumber(const LensSystem& system, double target);

// --- Object-space sampling -------------------------------------------------

struct Emitter {
  bool at_infinity = true;
  Vec3 direction{0, 0, 1};  // infinite conjugate
  Vec3 point;               // finite conjugate
};

Emitter field_angle(double theta_x_deg, double theta_y_deg);
Emitter point_source(const Vec3& p);

struct FieldSampling {
  std::vector<Emitter> emitters;  // emitters[0] is the on-axis / central point
};

/// Representative wavelengths (nm) per color channel, R/G/B.
struct ChannelWavelengths {
  std::vector<std::vector<double>> channels{{620.0, 656.3, 680.0}, {510.0, 546.1, 587.6},
                                            {450.0, 486.1, 495.0}};

  void validate() const;
  static ChannelWavelengths single_line(double wavelength_nm = kLambdaD) {
    return {{{wavelength_nm}, {wavelength_nm}, {wavelength_nm}}};
  }
};

struct PupilGrid {
  int rings = 12;
  int spokes = 24;
};

/// Launch geometry for one emitter: index 0 is the chief ray, then rings x spokes
/// samples (ring-major) on equal-area rings of the stop, then optional edge rays.
struct LaunchSet {
  std::vector<Vec3> origins;
  std::vector<Vec3> directions;
  std::size_t sample_count = 0;  // ring samples, excluding chief and edge rays
  std::size_t edge_count = 0;
  double flux = 0;  // projected pupil measure (area or solid angle)
  bool aimed = false;

  Ray ray(std::size_t i, double wavelength_nm) const {
    return Ray{origins[i], directions[i], wavelength_nm, 0.0, true};
  }
  std::size_t size() const { return origins.size(); }
};

/// Real-ray aims the chief ray at the stop center and maps an equal-area polar grid on
/// the stop back to object space through the local pupil Jacobian.
LaunchSet aim_pupil(const LensSystem& system, const Emitter& emitter, const PupilGrid& grid,
                    int edge_spokes = 0);
LaunchSet aim_pupil(const LensSystem& system, const TraceStack& d_line, const ParaxialResult& px,
                    const Emitter& emitter, const PupilGrid& grid, int edge_spokes = 0);

/// Scheimpflug sensor tilt (degrees) for a tilted object plane at the paraxial image.
/// Smallest vertex gap at which the facing surfaces around gap i do not intersect
/// within the smaller clear aperture (0 for touching vertices).
double contact_gap(const LensSystem& system, std::size_t gap_index);

/// Lateral magnification of an object plane at object_distance before the first vertex.
std::optional<double> paraxial_magnification(const LensSystem& system, double object_distance,
                                             double wavelength_nm = kLambdaD);

double scheimpflug_sensor_tilt(const LensSystem& system, const TiltGeometry& tilt);

/// Thin-element helpers used by search code.
double element_power(const Component& c);

}  // namespace lf
