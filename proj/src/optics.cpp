#include "lensfactory/optics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "lensfactory/error.hpp"

namespace lf {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// (y, nu) ray-transfer matrix, row-major [a b; c d].
struct Mat2 {
  double a = 1, b = 0, c = 0, d = 1;
};

Mat2 operator*(const Mat2& l, const Mat2& r) {
  return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d, l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d};
}

Mat2 surface_matrix(const Surface& s) {
  switch (s.kind) {
    case SurfaceKind::Refract:
      return {1, 0, -s.curvature * (s.n_after - s.n_before), 1};
    case SurfaceKind::Ideal:
      return {1, 0, -1.0 / s.focal, 1};
    case SurfaceKind::Stop:
      break;
  }
  return {};
}

// Refractions at surfaces [from, to) and the transfers between them.
Mat2 system_matrix(std::span<const Surface> s, std::size_t from, std::size_t to) {
  Mat2 m;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) {
      const double t = s[i].z - s[i - 1].z;
      m = Mat2{1, t / s[i - 1].n_after, 0, 1} * m;
    }
    m = surface_matrix(s[i]) * m;
  }
  return m;
}

struct ElementSurfaces {
  std::vector<double> radii;
  std::vector<double> thicknesses;
  std::vector<GlassSpec> glasses;
};

ElementSurfaces oriented(const ElementInstance& inst) {
  const LensElement& e = *inst.element;
  ElementSurfaces out{e.radii, e.thicknesses, e.glasses};
  if (inst.flipped) {
    std::reverse(out.radii.begin(), out.radii.end());
    for (double& r : out.radii) r = r == 0.0 ? 0.0 : -r;
    std::reverse(out.thicknesses.begin(), out.thicknesses.end());
    std::reverse(out.glasses.begin(), out.glasses.end());
  }
  return out;
}

double component_thickness(const Component& c) {
  if (const auto* e = std::get_if<ElementInstance>(&c)) return e->element->total_thickness();
  return 0.0;
}

}  // namespace

ElementInstance make_instance(ElementPtr element, bool flipped) {
  if (!element) throw ValidationError("null element");
  const bool f = flipped && !element->flip_symmetric();
  return {std::move(element), f};
}

IdealLens ideal_lens_surface(double focal_length, double semi_aperture) {
  if (focal_length == 0.0 || !std::isfinite(focal_length)) throw ValidationError("ideal lens needs a finite nonzero focal length");
  if (!(semi_aperture > 0)) throw ValidationError("ideal lens semi-aperture must be positive");
  return {focal_length, semi_aperture};
}

double SensorFormat::diagonal() const { return std::hypot(width, height); }

void ChannelWavelengths::validate() const {
  if (channels.size() != 3) throw ValidationError("expected 3 color channels");
  for (const auto& ch : channels) {
    if (ch.empty()) throw ValidationError("empty wavelength channel");
    for (double w : ch)
      if (!(w >= 380.0 && w <= 780.0)) throw ValidationError("wavelength outside [380, 780] nm");
  }
}

// --- LensSystem --------------------------------------------------------------

std::size_t LensSystem::stop_index() const {
  for (std::size_t i = 0; i < components.size(); ++i)
    if (std::holds_alternative<Stop>(components[i])) return i;
  throw ValidationError("system has no stop");
}

const Stop& LensSystem::stop() const { return std::get<Stop>(components[stop_index()]); }
Stop& LensSystem::stop() { return std::get<Stop>(components[stop_index()]); }

std::size_t LensSystem::lens_count() const { return lens_indices().size(); }

std::vector<std::size_t> LensSystem::lens_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < components.size(); ++i)
    if (std::holds_alternative<ElementInstance>(components[i])) out.push_back(i);
  return out;
}

double LensSystem::total_cost() const {
  double c = 0;
  for (const auto& comp : components)
    if (const auto* e = std::get_if<ElementInstance>(&comp)) c += e->element->cost;
  return c;
}

double LensSystem::length() const {
  double z = 0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    z += component_thickness(components[i]);
    if (i + 1 < components.size()) z += gaps[i];
  }
  return z;
}

double LensSystem::max_diameter() const {
  double d = 0;
  for (const auto& comp : components)
    if (const auto* e = std::get_if<ElementInstance>(&comp)) d = std::max(d, e->element->diameter);
  return d;
}

void LensSystem::validate() const {
  if (components.size() < 2) throw ValidationError("a system needs at least 2 components");
  std::size_t stops = 0;
  for (const auto& c : components) {
    std::visit(overloaded{[&](const Stop& s) {
                            ++stops;
                            if (!(s.aperture_radius > 0)) throw ValidationError("stop radius must be positive");
                          },
                          [](const ElementInstance& e) {
                            if (!e.element) throw ValidationError("null element");
                          },
                          [](const IdealLens& l) {
                            if (l.focal_length == 0 || !(l.semi_aperture > 0))
                              throw ValidationError("invalid ideal lens");
                          }},
               c);
  }
  if (stops != 1) throw ValidationError("a system needs exactly one stop");
  if (gaps.size() + 1 != components.size()) throw ValidationError("gap count must be component count - 1");
  for (double g : gaps)
    if (!(g >= 0) || !std::isfinite(g)) throw ValidationError("gaps must be finite and >= 0");
  if (!std::isfinite(sensor_gap)) throw ValidationError("sensor gap must be finite");
  if (!(sensor.width > 0 && sensor.height > 0)) throw ValidationError("sensor dimensions must be positive");
  if (tilt) {
    if (!(std::abs(tilt->object_plane_tilt) < 90 && std::abs(tilt->sensor_tilt) < 90))
      throw ValidationError("tilts must be within (-90, 90) degrees");
  }
  if (!decenters.empty() && decenters.size() != components.size())
    throw ValidationError("decenters must be empty or one per component");
  if (!frozen_gaps.empty() && frozen_gaps.size() != gaps.size())
    throw ValidationError("frozen gap mask must be empty or one per gap");
}

double element_power(const Component& c) {
  return std::visit(overloaded{[](const ElementInstance& e) { return e.element->power(); },
                               [](const IdealLens& l) { return 1000.0 / l.focal_length; },
                               [](const Stop&) { return 0.0; }},
                    c);
}

// --- Surfaces ----------------------------------------------------------------

SensorPlane make_sensor_plane(double z, double tilt_deg) {
  const double c = std::cos(tilt_deg * kDeg), s = std::sin(tilt_deg * kDeg);
  SensorPlane p;
  p.center = {0, 0, z};
  p.e1 = {1, 0, 0};
  p.e2 = {0, c, s};
  p.normal = {0, -s, c};
  return p;
}

Vec3 tilted_plane_point(double z, double tilt_deg, double x, double y) {
  return {x, y * std::cos(tilt_deg * kDeg), z + y * std::sin(tilt_deg * kDeg)};
}

TraceStack::TraceStack(const LensSystem& system, double wavelength_nm) : wavelength_(wavelength_nm) {
  double z = 0;
  const auto& comps = system.components;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Decenter dec = system.decenters.empty() ? Decenter{} : system.decenters[i];
    std::visit(overloaded{[&](const ElementInstance& inst) {
                            const ElementSurfaces es = oriented(inst);
                            const double semi = inst.element->diameter / 2.0;
                            for (std::size_t j = 0; j < es.radii.size(); ++j) {
                              Surface s;
                              s.kind = SurfaceKind::Refract;
                              s.z = z;
                              s.curvature = es.radii[j] == 0.0 ? 0.0 : 1.0 / es.radii[j];
                              s.semi_aperture = semi;
                              s.n_before = j == 0 ? 1.0 : refractive_index(es.glasses[j - 1], wavelength_nm);
                              s.n_after = j < es.glasses.size() ? refractive_index(es.glasses[j], wavelength_nm) : 1.0;
                              s.dx = dec.dx;
                              s.dy = dec.dy;
                              s.component = i;
                              surfaces_.push_back(s);
                              if (j < es.thicknesses.size()) z += es.thicknesses[j];
                            }
                          },
                          [&](const Stop& st) {
                            Surface s;
                            s.kind = SurfaceKind::Stop;
                            s.z = z;
                            s.semi_aperture = st.aperture_radius;
                            s.dx = dec.dx;
                            s.dy = dec.dy;
                            s.component = i;
                            stop_surface_ = surfaces_.size();
                            surfaces_.push_back(s);
                          },
                          [&](const IdealLens& l) {
                            Surface s;
                            s.kind = SurfaceKind::Ideal;
                            s.z = z;
                            s.focal = l.focal_length;
                            s.semi_aperture = l.semi_aperture;
                            s.phase_offset = 2.0 * l.semi_aperture;
                            s.dx = dec.dx;
                            s.dy = dec.dy;
                            s.component = i;
                            surfaces_.push_back(s);
                          }},
               comps[i]);
    if (i + 1 < comps.size()) z += system.gaps[i];
  }
  if (surfaces_.empty()) throw ValidationError("system has no surfaces");
  set_sensor(system.sensor_gap, system.sensor_tilt());
}

void TraceStack::set_sensor(double sensor_gap, double tilt_deg) {
  sensor_ = make_sensor_plane(last_z() + sensor_gap, tilt_deg);
}

std::optional<Vec3> refract(const Vec3& d, const Vec3& n, double n1, double n2) {
  Vec3 nn = n;
  double cos_i = dot(d, nn);
  if (cos_i < 0) {
    nn = -nn;
    cos_i = -cos_i;
  }
  const double mu = n1 / n2;
  const double k = 1.0 - mu * mu * (1.0 - cos_i * cos_i);
  if (k < 0) return std::nullopt;
  return mu * d + (std::sqrt(k) - mu * cos_i) * nn;
}

bool trace_surface(const Surface& s, Ray& ray, bool clip) {
  if (!ray.alive) return false;
  const Vec3 off{s.dx, s.dy, s.z};
  const Vec3 p = ray.origin - off;
  const Vec3 d = ray.direction;
  double t;
  if (s.curvature == 0.0) {
    if (d.z == 0.0) return ray.alive = false;
    t = -p.z / d.z;
  } else {
    const double c = s.curvature;
    const double b = c * dot(p, d) - d.z;
    const double cc = c * dot(p, p) - 2.0 * p.z;
    const double disc = b * b - c * cc;
    if (disc < 0) return ray.alive = false;
    const double denom = -b + std::sqrt(disc);
    if (denom <= 0) return ray.alive = false;
    t = cc / denom;
  }
  if (!(t >= -1e-9)) return ray.alive = false;
  const Vec3 hit = p + t * d;
  const double r2 = hit.x * hit.x + hit.y * hit.y;
  if (clip && r2 > s.semi_aperture * s.semi_aperture) return ray.alive = false;
  ray.path += t * s.n_before;
  ray.origin = hit + off;

  switch (s.kind) {
    case SurfaceKind::Stop:
      break;
    case SurfaceKind::Refract: {
      if (s.n_before == s.n_after) break;
      const double c = s.curvature;
      const Vec3 normal = normalized(Vec3{-c * hit.x, -c * hit.y, 1.0 - c * hit.z});
      const auto out = refract(d, normal, s.n_before, s.n_after);
      if (!out) return ray.alive = false;
      ray.direction = *out;
      break;
    }
    case SurfaceKind::Ideal: {
      if (d.z <= 0) return ray.alive = false;
      const double f = s.focal;
      const Vec3 q{d.x / d.z * f, d.y / d.z * f, f};
      const Vec3 pq = q - hit;
      const double lpq = norm(pq);
      const double lq = norm(q);
      const double sign = f > 0 ? 1.0 : -1.0;
      ray.direction = sign * (pq / lpq);
      ray.path += -dot(hit, d) - sign * (lpq - lq) + s.phase_offset;
      break;
    }
  }
  return true;
}

void trace_surfaces(const TraceStack& stack, Ray& ray, std::size_t end, bool clip) {
  const auto surfs = stack.surfaces();
  for (std::size_t i = 0; i < end && ray.alive; ++i) trace_surface(surfs[i], ray, clip);
}

void propagate_to_sensor(const SensorPlane& sensor, Ray& ray) {
  if (!ray.alive) return;
  const double dn = dot(ray.direction, sensor.normal);
  if (dn == 0.0) {
    ray.alive = false;
    return;
  }
  const double t = dot(sensor.center - ray.origin, sensor.normal) / dn;
  if (!std::isfinite(t)) {
    ray.alive = false;
    return;
  }
  ray.origin += t * ray.direction;
  ray.path += t;
}

Ray trace_ray(const LensSystem& system, Ray ray) {
  const TraceStack stack(system, ray.wavelength);
  trace_to_last_surface(stack, ray);
  propagate_to_sensor(stack.sensor(), ray);
  return ray;
}

// --- Paraxial ----------------------------------------------------------------

ParaxialResult paraxial_trace(const LensSystem& system, double wavelength_nm) {
  const TraceStack stack(system, wavelength_nm);
  const auto s = stack.surfaces();
  const std::size_t n = s.size();
  const Mat2 m = system_matrix(s, 0, n);

  ParaxialResult r;
  r.first_z = s.front().z;
  r.last_z = s.back().z;
  const double power = -m.c;
  if (std::abs(power) < 1e-12) {
    r.afocal = true;
    return r;
  }
  r.efl = 1.0 / power;
  r.bfl = m.a / power;
  r.ffl = m.d / power;
  r.front_principal_z = r.first_z + (1.0 - m.d) / power;
  r.rear_principal_z = r.last_z - (1.0 - m.a) / power;

  const std::size_t k = stack.stop_surface();
  const double r_stop = s[k].semi_aperture;
  const Mat2 front = system_matrix(s, 0, k + 1);
  r.stop_height_ratio = front.a;
  if (std::abs(front.a) > 1e-12) {
    r.entrance_pupil_z = r.first_z + front.b / front.a;
    r.entrance_pupil_diameter = 2.0 * r_stop / std::abs(front.a);
  } else {
    r.entrance_pupil_z = s[k].z;
    r.entrance_pupil_diameter = 0.0;
  }
  const Mat2 rear = system_matrix(s, k, n);
  if (std::abs(rear.d) > 1e-12) {
    r.exit_pupil_z = r.last_z - rear.b / rear.d;
    r.exit_pupil_diameter = 2.0 * r_stop / std::abs(rear.d);
  } else {
    r.exit_pupil_z = -std::numeric_limits<double>::infinity();
    r.exit_pupil_diameter = std::numeric_limits<double>::infinity();
  }
  return r;
}

std::optional<double> paraxial_image_distance(const LensSystem& system, double object_distance,
                                              double wavelength_nm) {
  const TraceStack stack(system, wavelength_nm);
  const Mat2 m = system_matrix(stack.surfaces(), 0, stack.surfaces().size());
  double y, nu;
  if (object_distance <= 0) {
    y = m.a;
    nu = m.c;
  } else {
    y = m.a * object_distance + m.b;
    nu = m.c * object_distance + m.d;
  }
  if (std::abs(nu) < 1e-15) return std::nullopt;
  const double s = -y / nu;
  if (!(s > 0) || !std::isfinite(s)) return std::nullopt;
  return s;
}

// --- Aiming ------------------------------------------------------------------

namespace {

struct Launch {
  Vec3 origin;
  Vec3 direction;
};

class Aimer {
 public:
  Aimer(const TraceStack& stack, const ParaxialResult& px, const Emitter& emitter)
      : stack_(stack), emitter_(emitter) {
    const auto s = stack.surfaces();
    const Surface& stop = s[stack.stop_surface()];
    stop_center_ = {stop.dx, stop.dy};
    r_stop_ = stop.semi_aperture;
    z_ep_ = px.entrance_pupil_diameter > 0 && std::isfinite(px.entrance_pupil_z) ? px.entrance_pupil_z : stop.z;
    double max_semi = 0;
    for (const auto& surf : s) max_semi = std::max(max_semi, surf.semi_aperture);
    const double tan_field = emitter.at_infinity
                                 ? std::hypot(emitter.direction.x, emitter.direction.y) / std::max(emitter.direction.z, 0.05)
                                 : 0.0;
    z_ref_ = std::min(0.0, z_ep_) - (10.0 + 2.0 * max_semi * (1.0 + tan_field));
    r_ep_ = px.entrance_pupil_diameter > 0 ? px.entrance_pupil_diameter / 2.0 : r_stop_;
  }

  Launch launch(Vec2 p) const {
    const Vec3 p3{p.x, p.y, z_ep_};
    if (emitter_.at_infinity) {
      const Vec3& d = emitter_.direction;
      const Vec3 ref{0, 0, z_ref_};
      return {p3 - d * dot(p3 - ref, d), d};
    }
    return {emitter_.point, normalized(p3 - emitter_.point)};
  }

  // Stop-plane position relative to the stop center, apertures ignored.
  std::optional<Vec2> stop_hit(Vec2 p) const {
    const Launch l = launch(p);
    Ray ray{l.origin, l.direction, stack_.wavelength(), 0.0, true};
    trace_surfaces(stack_, ray, stack_.stop_surface() + 1, false);
    if (!ray.alive) return std::nullopt;
    return Vec2{ray.origin.x - stop_center_.x, ray.origin.y - stop_center_.y};
  }

  // Columns are d(stop)/dpx and d(stop)/dpy.
  std::optional<std::array<double, 4>> jacobian(Vec2 p) const {
    const double h = 1e-4 * std::max(r_ep_, 0.1);
    const auto xp = stop_hit({p.x + h, p.y});
    const auto xm = stop_hit({p.x - h, p.y});
    const auto yp = stop_hit({p.x, p.y + h});
    const auto ym = stop_hit({p.x, p.y - h});
    if (!xp || !xm || !yp || !ym) return std::nullopt;
    return std::array<double, 4>{(xp->x - xm->x) / (2 * h), (yp->x - ym->x) / (2 * h), (xp->y - xm->y) / (2 * h),
                                 (yp->y - ym->y) / (2 * h)};
  }

  std::optional<Vec2> solve_chief() const { return solve({0, 0}, {0, 0}); }

  // Entrance-plane point whose ray reaches `target` on the stop plane, by Newton from `p`.
  std::optional<Vec2> solve(Vec2 target, Vec2 p) const {
    const double tol = 1e-11 * (r_stop_ + 1.0);
    for (int it = 0; it < 30; ++it) {
      const auto s = stop_hit(p);
      if (!s) return std::nullopt;
      const double ex = s->x - target.x, ey = s->y - target.y;
      if (std::hypot(ex, ey) < tol) return p;
      const auto j = jacobian(p);
      if (!j) return std::nullopt;
      const double det = (*j)[0] * (*j)[3] - (*j)[1] * (*j)[2];
      if (std::abs(det) < 1e-14) return std::nullopt;
      p.x -= ((*j)[3] * ex - (*j)[1] * ey) / det;
      p.y -= (-(*j)[2] * ex + (*j)[0] * ey) / det;
    }
    const auto s = stop_hit(p);
    if (s && std::hypot(s->x - target.x, s->y - target.y) < 1e-7 * (r_stop_ + 1.0)) return p;
    return std::nullopt;
  }

  double r_stop() const { return r_stop_; }
  double r_ep() const { return r_ep_; }
  double z_ep() const { return z_ep_; }

 private:
  const TraceStack& stack_;
  Emitter emitter_;
  Vec2 stop_center_;
  double r_stop_ = 0;
  double r_ep_ = 0;
  double z_ep_ = 0;
  double z_ref_ = 0;
};

}  // namespace

Emitter field_angle(double theta_x_deg, double theta_y_deg) {
  const double tx = std::tan(theta_x_deg * kDeg), ty = std::tan(theta_y_deg * kDeg);
  Emitter e;
  e.at_infinity = true;
  e.direction = normalized(Vec3{tx, ty, 1.0});
  return e;
}

Emitter point_source(const Vec3& p) {
  Emitter e;
  e.at_infinity = false;
  e.point = p;
  return e;
}

LaunchSet aim_pupil(const LensSystem& system, const Emitter& emitter, const PupilGrid& grid, int edge_spokes) {
  const TraceStack stack(system, kLambdaD);
  const ParaxialResult px = paraxial_trace(system, kLambdaD);
  return aim_pupil(system, stack, px, emitter, grid, edge_spokes);
}

LaunchSet aim_pupil(const LensSystem&, const TraceStack& d_line, const ParaxialResult& px, const Emitter& emitter,
                    const PupilGrid& grid, int edge_spokes) {
  const Aimer aimer(d_line, px, emitter);
  LaunchSet out;
  Vec2 chief{0, 0};
  // Inverse Jacobian: stop offset -> entrance-plane offset.
  double inv[4];
  const double scale = aimer.r_ep() / aimer.r_stop();
  inv[0] = scale;
  inv[1] = 0;
  inv[2] = 0;
  inv[3] = scale;
  double det_inv = scale * scale;

  if (const auto c = aimer.solve_chief()) {
    if (const auto j = aimer.jacobian(*c)) {
      const double det = (*j)[0] * (*j)[3] - (*j)[1] * (*j)[2];
      if (std::abs(det) > 1e-14) {
        chief = *c;
        inv[0] = (*j)[3] / det;
        inv[1] = -(*j)[1] / det;
        inv[2] = -(*j)[2] / det;
        inv[3] = (*j)[0] / det;
        det_inv = 1.0 / std::abs(det);
        out.aimed = true;
      }
    }
  }

  auto push = [&](double sx, double sy) {
    const Vec2 p{chief.x + inv[0] * sx + inv[1] * sy, chief.y + inv[2] * sx + inv[3] * sy};
    const Launch l = aimer.launch(p);
    out.origins.push_back(l.origin);
    out.directions.push_back(l.direction);
  };

  push(0, 0);
  const double rs = aimer.r_stop();
  for (int i = 1; i <= grid.rings; ++i) {
    const double rho = std::sqrt((i - 0.5) / grid.rings);
    for (int j = 0; j < grid.spokes; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / grid.spokes;
      push(rs * rho * std::cos(phi), rs * rho * std::sin(phi));
    }
  }
  out.sample_count = static_cast<std::size_t>(grid.rings) * grid.spokes;
  // Rim rays define the pupil boundary, so they are solved onto the stop edge exactly.
  for (int j = 0; j < edge_spokes; ++j) {
    const double phi = 2.0 * std::numbers::pi * j / edge_spokes;
    const double sx = rs * (1.0 - 1e-6) * std::cos(phi), sy = rs * (1.0 - 1e-6) * std::sin(phi);
    const Vec2 guess{chief.x + inv[0] * sx + inv[1] * sy, chief.y + inv[2] * sx + inv[3] * sy};
    const auto p = out.aimed ? aimer.solve({sx, sy}, guess) : std::nullopt;
    const Launch l = aimer.launch(p.value_or(guess));
    out.origins.push_back(l.origin);
    out.directions.push_back(l.direction);
  }
  out.edge_count = static_cast<std::size_t>(std::max(edge_spokes, 0));

  if (out.aimed) {
    const double area = std::numbers::pi * rs * rs * det_inv;
    const Vec3 d = out.directions.front();
    if (emitter.at_infinity) {
      out.flux = area * std::abs(d.z);
    } else {
      const Vec3 ep{chief.x, chief.y, aimer.z_ep()};
      const double dist = norm(ep - emitter.point);
      out.flux = area * std::abs(d.z) / (dist * dist);
    }
  }
  return out;
}

// --- First-order queries -----------------------------------------------------

double system_fov(const LensSystem& system, FovAxis axis) {
  const ParaxialResult px = paraxial_trace(system);
  if (px.afocal) throw AfocalError("system is afocal");
  double half = 0;
  switch (axis) {
    case FovAxis::Diagonal:
      half = system.sensor.diagonal() / 2.0;
      break;
    case FovAxis::Horizontal:
      half = system.sensor.width / 2.0;
      break;
    case FovAxis::Vertical:
      half = system.sensor.height / 2.0;
      break;
  }
  const double paraxial = 2.0 * std::atan(half / std::abs(px.efl)) / kDeg;
  if (px.efl <= 0) return paraxial;

  TraceStack stack(system, kLambdaD);
  if (!(system.sensor_gap > 0)) stack.set_sensor(px.bfl, system.sensor_tilt());
  // Image height of the chief ray for a field angle along y.
  auto height = [&](double theta) -> std::optional<double> {
    const Emitter e = field_angle(0, theta / kDeg);
    const Aimer aimer(stack, px, e);
    const auto c = aimer.solve_chief();
    if (!c) return std::nullopt;
    const Launch l = aimer.launch(*c);
    Ray ray{l.origin, l.direction, kLambdaD, 0.0, true};
    trace_surfaces(stack, ray, stack.surfaces().size(), false);
    propagate_to_sensor(stack.sensor(), ray);
    if (!ray.alive) return std::nullopt;
    return std::abs(sensor_coords(stack.sensor(), ray.origin).y);
  };

  double t0 = std::atan(half / px.efl);
  double t1 = 0.98 * t0;
  auto h0 = height(t0);
  auto h1 = height(t1);
  if (!h0 || !h1) return paraxial;
  double f0 = *h0 - half, f1 = *h1 - half;
  for (int it = 0; it < 40; ++it) {
    if (std::abs(f0) < 1e-9 * half) return 2.0 * t0 / kDeg;
    if (f0 == f1) break;
    double t2 = t0 - f0 * (t0 - t1) / (f0 - f1);
    t2 = std::clamp(t2, 1e-6, 89.0 * kDeg);
    const auto h2 = height(t2);
    if (!h2) return paraxial;
    t1 = t0;
    f1 = f0;
    t0 = t2;
    f0 = *h2 - half;
  }
  if (std::abs(f0) < 1e-6 * half) return 2.0 * t0 / kDeg;
  return paraxial;
}

LensSystem set_fnumber(const LensSystem& system, double target) {
  if (!(target >= 0.8)) throw UnreachableFNumber("f-number below 0.8");
  const ParaxialResult px = paraxial_trace(system);
  if (px.afocal) throw AfocalError("system is afocal");
  if (px.efl <= 0) throw UnreachableFNumber("f-number needs a positive focal length");
  const TraceStack stack(system, kLambdaD);
  const auto s = stack.surfaces();
  const std::size_t k = stack.stop_surface();
  const double r_ep = px.efl / (2.0 * target);
  const double ratio = std::abs(system_matrix(s, 0, k + 1).a);
  if (ratio < 1e-12) throw UnreachableFNumber("stop is conjugate to infinity");
  const double r_stop = r_ep * ratio;

  // Axial marginal ray must clear every rim.
  double y = r_ep, nu = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) y += (s[i].z - s[i - 1].z) * nu / s[i - 1].n_after;
    if (i != k && std::abs(y) > s[i].semi_aperture * (1.0 + 1e-12))
      throw UnreachableFNumber("axial bundle exceeds a clear aperture");
    const Mat2 m = surface_matrix(s[i]);
    nu = m.c * y + m.d * nu;
  }
  LensSystem out = system;
  out.stop().aperture_radius = r_stop;
  return out;
}

std::optional<double> paraxial_magnification(const LensSystem& system, double object_distance,
                                             double wavelength_nm) {
  const auto s = paraxial_image_distance(system, object_distance, wavelength_nm);
  if (!s || object_distance <= 0) return std::nullopt;
  const TraceStack stack(system, wavelength_nm);
  const Mat2 m = system_matrix(stack.surfaces(), 0, stack.surfaces().size());
  return m.a + *s * m.c;
}

namespace {

// Facing surface of a component: radius (0 flat) and semi-aperture (0 unbounded).
std::pair<double, double> facing_surface(const Component& c, bool rear) {
  if (const auto* e = std::get_if<ElementInstance>(&c)) {
    const ElementSurfaces es = oriented(*e);
    return {rear ? es.radii.back() : es.radii.front(), e->element->diameter / 2.0};
  }
  return {0.0, 0.0};
}

double surface_sag(double radius, double h) {
  if (radius == 0.0) return 0.0;
  const double c = 1.0 / radius;
  const double x = std::min(1.0, c * c * h * h);
  return c * h * h / (1.0 + std::sqrt(1.0 - x));
}

}  // namespace

double contact_gap(const LensSystem& system, std::size_t gap_index) {
  const auto [r_left, semi_left] = facing_surface(system.components.at(gap_index), true);
  const auto [r_right, semi_right] = facing_surface(system.components.at(gap_index + 1), false);
  double h_max;
  if (semi_left > 0 && semi_right > 0) h_max = std::min(semi_left, semi_right);
  else h_max = std::max(semi_left, semi_right);
  double need = 0.0;
  constexpr int kSamples = 64;
  for (int i = 1; i <= kSamples; ++i) {
    const double h = h_max * i / kSamples;
    need = std::max(need, surface_sag(r_left, h) - surface_sag(r_right, h));
  }
  return need;
}

double scheimpflug_sensor_tilt(const LensSystem& system, const TiltGeometry& tilt) {
  if (tilt.object_distance <= 0) return 0.0;
  const auto mag = paraxial_magnification(system, tilt.object_distance);
  if (!mag) return 0.0;
  return std::atan(*mag * std::tan(tilt.object_plane_tilt * kDeg)) / kDeg;
}

}  // namespace lf
