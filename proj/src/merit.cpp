#include "lensfactory/merit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "lensfactory/error.hpp"

namespace lf {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr int kEdgeSpokes = 48;
constexpr int kMinPupilGrid = 64;

using cd = std::complex<double>;

double nm_to_mm(double nm) { return nm * 1e-6; }

Vec3 sensor_point(const SensorPlane& s, Vec2 p) { return s.center + s.e1 * p.x + s.e2 * p.y; }

// Sphere radius from the sensor point to the chief ray's exit-pupil crossing.
double reference_radius(const ExitRayCache& cache, const ExitBundle& b, const Vec3& center) {
  const double zx = cache.paraxial().exit_pupil_z;
  const Ray& chief = b.rays.front();
  if (chief.alive && std::isfinite(zx) && std::abs(chief.direction.z) > 1e-12) {
    const Vec3 e = chief.origin + chief.direction * ((zx - chief.origin.z) / chief.direction.z);
    const double r = norm(e - center);
    if (r > 1e-6) return r;
  }
  return 1e4;
}

// Optical path of an exit ray up to its first crossing of the sphere (c, r).
std::optional<double> path_to_sphere(const Ray& ray, const Vec3& c, double r) {
  const Vec3 oc = ray.origin - c;
  const double b = dot(ray.direction, oc);
  const double disc = b * b - (dot(oc, oc) - r * r);
  if (disc < 0) return std::nullopt;
  return ray.path + (-b - std::sqrt(disc));
}

double cross2(Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  if (pts.size() < 3) return pts;
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross2(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

// Exit-pupil wavefront W over direction cosines (a, b) on the sensor axes, fitted by a
// bivariate polynomial and masked by the convex hull of the live rays.
class PupilModel {
 public:
  PupilModel(const ExitRayCache& cache, std::size_t emitter, std::size_t w, const SensorPlane& sensor,
             const PsfOptions& opt)
      : sensor_(sensor) {
    const ExitBundle& b = cache.bundle(emitter, w);
    lambda_mm_ = nm_to_mm(cache.wavelengths()[w]);

    std::vector<const Ray*> exits;
    std::vector<Vec3> hits;
    for (const Ray& r : b.rays) {
      const Ray l = land(r, sensor);
      if (!l.alive) continue;
      exits.push_back(&r);
      hits.push_back(l.origin);
    }
    if (exits.size() < 3) throw TooFewRays("fewer than 3 live rays for the PSF");

    if (opt.center_mm) {
      center_mm_ = *opt.center_mm;
    } else if (const Ray chief = land(b.rays.front(), sensor); chief.alive) {
      center_mm_ = sensor_coords(sensor, chief.origin);
    } else {
      for (const Vec3& h : hits) {
        const Vec2 p = sensor_coords(sensor, h);
        center_mm_.x += p.x / hits.size();
        center_mm_.y += p.y / hits.size();
      }
    }
    center_ = sensor_point(sensor, center_mm_);
    radius_ = reference_radius(cache, b, center_);

    std::vector<double> as, bs, ws;
    for (std::size_t i = 0; i < exits.size(); ++i) {
      const auto opl = path_to_sphere(*exits[i], center_, radius_);
      if (!opl) continue;
      as.push_back(dot(exits[i]->direction, sensor.e1));
      bs.push_back(dot(exits[i]->direction, sensor.e2));
      ws.push_back(*opl);
      spot_radius_mm_ = std::max(spot_radius_mm_, norm(hits[i] - center_));
    }
    const std::size_t n = ws.size();
    if (n < 3) throw TooFewRays("fewer than 3 rays reach the reference sphere");
    double mean = 0;
    for (double v : ws) mean += v / n;
    for (double& v : ws) v -= mean;

    a0_ = 0;
    b0_ = 0;
    for (std::size_t i = 0; i < n; ++i) {
      a0_ += as[i] / n;
      b0_ += bs[i] / n;
    }
    scale_ = 0;
    for (std::size_t i = 0; i < n; ++i) scale_ = std::max(scale_, std::hypot(as[i] - a0_, bs[i] - b0_));
    if (scale_ <= 0) scale_ = 1e-9;

    std::vector<Vec2> uv(n);
    for (std::size_t i = 0; i < n; ++i) uv[i] = {(as[i] - a0_) / scale_, (bs[i] - b0_) / scale_};
    hull_ = convex_hull(uv);
    u_min_ = v_min_ = 1e300;
    u_max_ = v_max_ = -1e300;
    for (const Vec2& p : hull_) {
      u_min_ = std::min(u_min_, p.x);
      u_max_ = std::max(u_max_, p.x);
      v_min_ = std::min(v_min_, p.y);
      v_max_ = std::max(v_max_, p.y);
    }

    // Ring and spoke samples leave some monomials unconstrained (sin(m theta) vanishes on
    // every spoke once m reaches half the spoke count), so drop the degree until the
    // design matrix has full column rank.
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = ws[i];
    for (degree_ = std::max(0, opt.fit_degree);; --degree_) {
      const int terms = (degree_ + 1) * (degree_ + 2) / 2;
      if (static_cast<std::size_t>(terms) * 2 > n && degree_ > 0) continue;
      Eigen::MatrixXd a(static_cast<Eigen::Index>(n), terms);
      std::vector<double> row(static_cast<std::size_t>(terms));
      for (std::size_t i = 0; i < n; ++i) {
        basis(uv[i].x, uv[i].y, row);
        for (int t = 0; t < terms; ++t) a(static_cast<Eigen::Index>(i), t) = row[static_cast<std::size_t>(t)];
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
      qr.setThreshold(1e-9);
      if (qr.rank() == terms || degree_ == 0) {
        coef_ = qr.solve(rhs);
        break;
      }
    }
  }

  double lambda_mm() const { return lambda_mm_; }
  double k() const { return 2.0 * kPi / lambda_mm_; }
  Vec2 center_mm() const { return center_mm_; }
  const Vec3& center() const { return center_; }
  double radius() const { return radius_; }
  double spot_radius_mm() const { return spot_radius_mm_; }

  // Direction-cosine extent of the mask.
  double a_lo() const { return a0_ + u_min_ * scale_; }
  double a_hi() const { return a0_ + u_max_ * scale_; }
  double b_lo() const { return b0_ + v_min_ * scale_; }
  double b_hi() const { return b0_ + v_max_ * scale_; }

  /// Samples the masked pupil function exp(ikW) / cos(gamma) at cell centers.
  /// Returns a row-major (b-major) matrix of size nb x na.
  Eigen::MatrixXcd sample(const std::vector<double>& a, const std::vector<double>& b) const {
    const double kk = k();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    std::vector<double> upow(static_cast<std::size_t>(degree_) + 1), vpow(static_cast<std::size_t>(degree_) + 1);
    std::vector<double> rowc(static_cast<std::size_t>(degree_) + 1);
    for (std::size_t q = 0; q < b.size(); ++q) {
      const double v = (b[q] - b0_) / scale_;
      const auto span = row_span(v);
      if (!span) continue;
      vpow[0] = 1;
      for (int d = 1; d <= degree_; ++d) vpow[static_cast<std::size_t>(d)] = vpow[static_cast<std::size_t>(d) - 1] * v;
      // Collapse to a polynomial in u for this row.
      std::fill(rowc.begin(), rowc.end(), 0.0);
      int t = 0;
      for (int d = 0; d <= degree_; ++d)
        for (int j = 0; j <= d; ++j) rowc[static_cast<std::size_t>(d - j)] += coef_[t++] * vpow[static_cast<std::size_t>(j)];
      for (std::size_t p = 0; p < a.size(); ++p) {
        const double u = (a[p] - a0_) / scale_;
        if (u < span->first || u > span->second) continue;
        double w = 0;
        for (int i = degree_; i >= 0; --i) w = w * u + rowc[static_cast<std::size_t>(i)];
        const double c2 = 1.0 - a[p] * a[p] - b[q] * b[q];
        if (c2 <= 0) continue;
        out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = std::polar(1.0 / std::sqrt(c2), kk * w);
      }
    }
    return out;
  }

 private:
  void basis(double u, double v, std::vector<double>& row) const {
    double up[16], vp[16];
    up[0] = vp[0] = 1.0;
    for (int d = 1; d <= degree_; ++d) {
      up[d] = up[d - 1] * u;
      vp[d] = vp[d - 1] * v;
    }
    std::size_t t = 0;
    for (int d = 0; d <= degree_; ++d)
      for (int j = 0; j <= d; ++j) row[t++] = up[d - j] * vp[j];
  }

  std::optional<std::pair<double, double>> row_span(double v) const {
    double lo = 1e300, hi = -1e300;
    const std::size_t n = hull_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = hull_[i], q = hull_[(i + 1) % n];
      if (!((p.y <= v && q.y >= v) || (q.y <= v && p.y >= v))) continue;
      if (p.y == q.y) {
        lo = std::min({lo, p.x, q.x});
        hi = std::max({hi, p.x, q.x});
      } else {
        const double x = p.x + (v - p.y) / (q.y - p.y) * (q.x - p.x);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    if (lo > hi) return std::nullopt;
    return std::pair{lo, hi};
  }

  SensorPlane sensor_;
  double lambda_mm_ = 0;
  Vec2 center_mm_;
  Vec3 center_;
  double radius_ = 0;
  double spot_radius_mm_ = 0;
  double a0_ = 0, b0_ = 0, scale_ = 1;
  int degree_ = 0;
  Eigen::VectorXd coef_;
  std::vector<Vec2> hull_;
  double u_min_ = 0, u_max_ = 0, v_min_ = 0, v_max_ = 0;
};

// Cell-centered samples covering [lo, hi] with the given spacing.
std::vector<double> cell_centers(double lo, double hi, double step) {
  const int m = std::max(1, static_cast<int>(std::ceil((hi - lo) / step)));
  const double mid = 0.5 * (lo + hi);
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(i)] = mid + (i - 0.5 * (m - 1)) * step;
  return out;
}

// exp(i * scale * c_j * (m - n/2)) for every m, by recurrence outward from m = n/2.
Eigen::MatrixXcd phase_ramps(const std::vector<double>& c, double scale, int n) {
  Eigen::MatrixXcd out(n, static_cast<Eigen::Index>(c.size()));
  const int mid = n / 2;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const cd step = std::polar(1.0, scale * c[j]);
    const cd back = std::conj(step);
    out(mid, col) = 1.0;
    for (int m = mid + 1; m < n; ++m) out(m, col) = out(m - 1, col) * step;
    for (int m = mid - 1; m >= 0; --m) out(m, col) = out(m + 1, col) * back;
  }
  return out;
}

void normalize(std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  if (s > 0)
    for (double& x : v) x /= s;
}

std::vector<double> distinct_wavelengths(const ChannelWavelengths& cw) {
  std::vector<double> out;
  for (const auto& ch : cw.channels) out.insert(out.end(), ch.begin(), ch.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::string_view to_string(MeritMode mode) {
  switch (mode) {
    case MeritMode::Spot:
      return "spot";
    case MeritMode::Opd:
      return "opd";
    case MeritMode::Mtf:
      return "mtf";
  }
  return "spot";
}

std::optional<MeritMode> parse_merit_mode(std::string_view text) {
  if (text == "spot") return MeritMode::Spot;
  if (text == "opd") return MeritMode::Opd;
  if (text == "mtf") return MeritMode::Mtf;
  return std::nullopt;
}

double MeritConfig::cutoff() const { return mtf_cutoff > 0 ? mtf_cutoff : 1.0 / (2.0 * pixel_pitch_um * 1e-3); }

void MeritConfig::validate() const {
  wavelengths.validate();
  if (!(psf_window_um > 0)) throw ValidationError("psf window must be positive");
  if (psf_grid < 8 || (psf_grid & (psf_grid - 1)) != 0) throw ValidationError("psf grid must be a power of two >= 8");
  if (pupil.rings < 1 || pupil.spokes < 3) throw ValidationError("pupil grid needs >= 1 ring and >= 3 spokes");
  if (!(pixel_pitch_um > 0)) throw ValidationError("pixel pitch must be positive");
  if (fit_degree < 0 || fit_degree > 14) throw ValidationError("fit degree must be in [0, 14]");
  if (max_pupil_grid < 16) throw ValidationError("max pupil grid must be >= 16");
}

FieldSampling relative_fields(double half_fov_deg, std::span<const double> fractions) {
  FieldSampling f;
  for (double r : fractions) f.emitters.push_back(field_angle(0, r * half_fov_deg));
  return f;
}

FieldSampling relative_fields(double half_fov_deg) {
  static constexpr double kFractions[] = {0.0, 0.5, 1.0};
  return relative_fields(half_fov_deg, kFractions);
}

FieldSampling default_fields(const LensSystem& system) {
  const ParaxialResult px = paraxial_trace(system);
  if (px.afocal) throw AfocalError("system is afocal");
  return relative_fields(std::atan(system.sensor.diagonal() / 2 / std::abs(px.efl)) / kDeg);
}

// --- Cache ---------------------------------------------------------------------

ExitRayCache::ExitRayCache(const LensSystem& system, const MeritConfig& config, bool with_edges)
    : system_(system), with_edges_(with_edges) {
  system_.validate();
  paraxial_ = paraxial_trace(system_, kLambdaD);
  emitters_ = config.fields.emitters.empty() ? default_fields(system_).emitters : config.fields.emitters;
  wavelengths_ = distinct_wavelengths(config.wavelengths);
  for (const auto& ch : config.wavelengths.channels) {
    std::vector<std::size_t> idx;
    for (double w : ch)
      idx.push_back(static_cast<std::size_t>(std::lower_bound(wavelengths_.begin(), wavelengths_.end(), w) -
                                             wavelengths_.begin()));
    channels_.push_back(std::move(idx));
  }

  const TraceStack d_line(system_, kLambdaD);
  last_z_ = d_line.last_z();
  surface_count_ = d_line.surfaces().size();
  for (const Emitter& e : emitters_)
    launches_.push_back(aim_pupil(system_, d_line, paraxial_, e, config.pupil, with_edges ? kEdgeSpokes : 0));

  stacks_.reserve(wavelengths_.size());
  for (double w : wavelengths_) stacks_.emplace_back(system_, w);
  retrace();
}

void ExitRayCache::retrace() {
  bundles_.assign(emitters_.size() * wavelengths_.size(), ExitBundle{});
  for (std::size_t w = 0; w < wavelengths_.size(); ++w) {
    const TraceStack& stack = stacks_[w];
    for (std::size_t e = 0; e < emitters_.size(); ++e) {
      const LaunchSet& ls = launches_[e];
      ExitBundle& b = bundles_[e * wavelengths_.size() + w];
      b.samples = ls.sample_count;
      b.edges = ls.edge_count;
      b.rays.reserve(ls.size());
      for (std::size_t i = 0; i < ls.size(); ++i) {
        Ray r = ls.ray(i, wavelengths_[w]);
        trace_to_last_surface(stack, r);
        if (r.alive && i >= 1 && i <= ls.sample_count) ++b.live_samples;
        b.rays.push_back(r);
      }
    }
  }
}

// --- Spot / OPD ------------------------------------------------------------------

double spot_msse(std::span<const Vec2> hits) {
  if (hits.empty()) return 0;
  double cx = 0, cy = 0;
  for (const Vec2& h : hits) {
    cx += h.x;
    cy += h.y;
  }
  cx /= hits.size();
  cy /= hits.size();
  double s = 0;
  for (const Vec2& h : hits) s += (h.x - cx) * (h.x - cx) + (h.y - cy) * (h.y - cy);
  return s / hits.size();
}

std::vector<Vec2> channel_hits(const ExitRayCache& cache, std::size_t emitter, std::size_t channel,
                               const SensorPlane& sensor) {
  std::vector<Vec2> hits;
  hits.reserve(cache.channel(channel).size() * cache.bundle(emitter, 0).samples);
  for (std::size_t w : cache.channel(channel)) {
    const ExitBundle& b = cache.bundle(emitter, w);
    for (std::size_t i = 1; i <= b.samples; ++i) {
      const Ray r = land(b.rays[i], sensor);
      if (r.alive) hits.push_back(sensor_coords(sensor, r.origin));
    }
  }
  return hits;
}

double spot_stat(const ExitRayCache& cache, std::size_t emitter, std::size_t channel, const SensorPlane& sensor) {
  const std::vector<Vec2> hits = channel_hits(cache, emitter, channel, sensor);
  if (hits.size() < 3) throw TooFewRays("fewer than 3 live rays on the sensor");
  return std::sqrt(spot_msse(hits)) * 1e3;
}

namespace {

MeritConfig single_emitter_config(const Emitter& emitter, std::span<const double> wavelengths, const PupilGrid& pupil) {
  MeritConfig cfg;
  cfg.fields.emitters = {emitter};
  cfg.wavelengths.channels = {std::vector<double>(wavelengths.begin(), wavelengths.end())};
  cfg.pupil = pupil;
  return cfg;
}

double sensor_gap_or_focus(const LensSystem& system, const ParaxialResult& px) {
  if (system.sensor_gap > 0) return system.sensor_gap;
  if (px.afocal) throw AfocalError("system is afocal");
  return px.bfl;
}

}  // namespace

double spot_stat(const LensSystem& system, const Emitter& emitter, std::span<const double> wavelengths,
                 const PupilGrid& pupil) {
  const ExitRayCache cache(system, single_emitter_config(emitter, wavelengths, pupil));
  return spot_stat(cache, 0, 0, cache.sensor_plane(system.sensor_gap, system.sensor_tilt()));
}

double opd_stat(const ExitRayCache& cache, std::size_t emitter, std::size_t channel, const SensorPlane& sensor) {
  double sum_sq = 0;
  std::size_t count = 0;
  std::vector<double> opl;
  for (std::size_t w : cache.channel(channel)) {
    const ExitBundle& b = cache.bundle(emitter, w);
    const double lambda = nm_to_mm(cache.wavelengths()[w]);
    Vec3 centroid;
    std::size_t live = 0;
    for (std::size_t i = 1; i <= b.samples; ++i) {
      const Ray r = land(b.rays[i], sensor);
      if (!r.alive) continue;
      centroid += r.origin;
      ++live;
    }
    if (live == 0) continue;
    centroid = centroid / static_cast<double>(live);
    const double radius = reference_radius(cache, b, centroid);
    opl.clear();
    for (std::size_t i = 1; i <= b.samples; ++i) {
      if (!land(b.rays[i], sensor).alive) continue;
      if (const auto p = path_to_sphere(b.rays[i], centroid, radius)) opl.push_back(*p);
    }
    if (opl.empty()) continue;
    double mean = 0;
    for (double v : opl) mean += v;
    mean /= opl.size();
    for (double v : opl) sum_sq += ((v - mean) / lambda) * ((v - mean) / lambda);
    count += opl.size();
  }
  if (count < 3) throw TooFewRays("fewer than 3 live rays on the sensor");
  return std::sqrt(sum_sq / count);
}

double opd_stat(const LensSystem& system, const Emitter& emitter, std::span<const double> wavelengths,
                const PupilGrid& pupil) {
  const ExitRayCache cache(system, single_emitter_config(emitter, wavelengths, pupil));
  return opd_stat(cache, 0, 0, cache.sensor_plane(system.sensor_gap, system.sensor_tilt()));
}

// --- PSF ---------------------------------------------------------------------------

PsfOptions psf_options(const MeritConfig& config) {
  PsfOptions o;
  o.window_um = config.psf_window_um;
  o.grid = config.psf_grid;
  o.max_pupil_grid = config.max_pupil_grid;
  o.fit_degree = config.fit_degree;
  return o;
}

PsfGrid render_psf(const ExitRayCache& cache, std::size_t emitter, std::size_t w, const SensorPlane& sensor,
                   const PsfOptions& opt) {
  const PupilModel pupil(cache, emitter, w, sensor, opt);
  const double half_window = 0.5 * opt.window_um * 1e-3;
  const double k = pupil.k();

  // Pupil spacing keeps the periodic replicas of the field clear of the window.
  const double extent = std::max(pupil.a_hi() - pupil.a_lo(), pupil.b_hi() - pupil.b_lo());
  double step = pupil.lambda_mm() / (1.5 * (half_window + pupil.spot_radius_mm()));
  step = std::min(step, extent / kMinPupilGrid);
  step = std::max(step, extent / opt.max_pupil_grid);
  const std::vector<double> as = cell_centers(pupil.a_lo(), pupil.a_hi(), step);
  const std::vector<double> bs = cell_centers(pupil.b_lo(), pupil.b_hi(), step);
  const Eigen::MatrixXcd p = pupil.sample(as, bs);  // na x nb

  const int n = opt.grid;
  const double pix = opt.window_um * 1e-3 / n;
  const Eigen::MatrixXcd ex = phase_ramps(as, k * pix, n);
  const Eigen::MatrixXcd ey = phase_ramps(bs, k * pix, n);
  const Eigen::MatrixXcd field = ex * p * ey.transpose();  // (x, y)

  PsfGrid out;
  out.n = n;
  out.window_um = opt.window_um;
  out.wavelength_nm = cache.wavelengths()[w];
  out.center_mm = pupil.center_mm();
  out.values.resize(static_cast<std::size_t>(n) * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) out.values[static_cast<std::size_t>(iy) * n + ix] = std::norm(field(ix, iy));
  normalize(out.values);
  return out;
}

PsfGrid render_psf(const LensSystem& system, const Emitter& emitter, double wavelength_nm, double sensor_gap,
                   const PsfOptions& options, const PupilGrid& pupil) {
  const double wl[] = {wavelength_nm};
  const ExitRayCache cache(system, single_emitter_config(emitter, wl, pupil), true);
  return render_psf(cache, 0, 0, cache.sensor_plane(sensor_gap, system.sensor_tilt()), options);
}

PsfGrid render_psf_direct(const ExitRayCache& cache, std::size_t emitter, std::size_t w, const SensorPlane& sensor,
                          const PsfOptions& opt, int pupil_samples) {
  const PupilModel pupil(cache, emitter, w, sensor, opt);
  const double k = pupil.k();
  const double extent = std::max(pupil.a_hi() - pupil.a_lo(), pupil.b_hi() - pupil.b_lo());
  const double step = extent / pupil_samples;
  const std::vector<double> as = cell_centers(pupil.a_lo(), pupil.a_hi(), step);
  const std::vector<double> bs = cell_centers(pupil.b_lo(), pupil.b_hi(), step);
  const Eigen::MatrixXcd p = pupil.sample(as, bs);

  struct Source {
    Vec3 pos;
    Vec3 dir;
    cd amp;
  };
  std::vector<Source> sources;
  const double r = pupil.radius();
  for (std::size_t i = 0; i < as.size(); ++i) {
    for (std::size_t j = 0; j < bs.size(); ++j) {
      const cd v = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v == cd{}) continue;
      const double cz = std::sqrt(1.0 - as[i] * as[i] - bs[j] * bs[j]);
      const Vec3 q = sensor.e1 * as[i] + sensor.e2 * bs[j] + sensor.normal * cz;
      // v already carries 1 / cos; the sphere element is r^2 dOmega.
      sources.push_back({pupil.center() - q * r, q, v * (r * r)});
    }
  }

  const int n = opt.grid;
  const double pix = opt.window_um * 1e-3 / n;
  PsfGrid out;
  out.n = n;
  out.window_um = opt.window_um;
  out.wavelength_nm = cache.wavelengths()[w];
  out.center_mm = pupil.center_mm();
  out.values.resize(static_cast<std::size_t>(n) * n);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const Vec3 x = sensor_point(sensor, {pupil.center_mm().x + (ix - n / 2) * pix,
                                           pupil.center_mm().y + (iy - n / 2) * pix});
      cd u{};
      for (const Source& s : sources) {
        const Vec3 d = x - s.pos;
        const double dist = norm(d);
        const double obliquity = dot(d, s.dir) / dist;
        // Subtracting r keeps the phase argument small.
        u += s.amp * std::polar(obliquity / dist, k * (dist - r));
      }
      out.values[static_cast<std::size_t>(iy) * n + ix] = std::norm(u);
    }
  }
  normalize(out.values);
  return out;
}

PsfGrid channel_psf(const ExitRayCache& cache, std::size_t emitter, std::size_t channel, const SensorPlane& sensor,
                    const PsfOptions& options) {
  PsfOptions opt = options;
  if (!opt.center_mm) {
    Vec2 c{0, 0};
    int live = 0;
    for (std::size_t w : cache.channel(channel)) {
      const Ray chief = land(cache.bundle(emitter, w).rays.front(), sensor);
      if (!chief.alive) continue;
      const Vec2 p = sensor_coords(sensor, chief.origin);
      c.x += p.x;
      c.y += p.y;
      ++live;
    }
    if (live > 0) opt.center_mm = Vec2{c.x / live, c.y / live};
  }
  PsfGrid sum;
  const auto ws = cache.channel(channel);
  for (std::size_t w : ws) {
    PsfGrid g = render_psf(cache, emitter, w, sensor, opt);
    if (sum.values.empty()) {
      sum = std::move(g);
      sum.wavelength_nm = ws.size() == 1 ? sum.wavelength_nm : 0.0;
      continue;
    }
    for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += g.values[i];
  }
  normalize(sum.values);
  return sum;
}

// --- MTF ---------------------------------------------------------------------------

namespace {

// |sum I exp(-2 pi i nu (dir . r))| for a set of frequencies.
std::vector<double> directional_mtf(const PsfGrid& psf, Vec2 dir, const std::vector<double>& freq) {
  const int n = psf.n;
  const double pix = psf.window_um * 1e-3 / n;
  std::vector<double> out;
  out.reserve(freq.size());

  const bool along_y = std::abs(dir.x) < 1e-15;
  const bool along_x = std::abs(dir.y) < 1e-15;
  std::vector<double> lsf;
  if (along_x || along_y) {
    lsf.assign(static_cast<std::size_t>(n), 0.0);
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) lsf[static_cast<std::size_t>(along_y ? iy : ix)] += psf.at(ix, iy);
  }
  const double sign = along_y ? (dir.y < 0 ? -1.0 : 1.0) : (dir.x < 0 ? -1.0 : 1.0);

  std::vector<cd> ex(static_cast<std::size_t>(n)), ey(static_cast<std::size_t>(n));
  double total = 0;
  for (double v : psf.values) total += v;
  for (double nu : freq) {
    cd s{};
    if (!lsf.empty()) {
      for (int i = 0; i < n; ++i)
        s += lsf[static_cast<std::size_t>(i)] * std::polar(1.0, -2.0 * kPi * nu * sign * (i - n / 2) * pix);
    } else {
      for (int i = 0; i < n; ++i) {
        ex[static_cast<std::size_t>(i)] = std::polar(1.0, -2.0 * kPi * nu * dir.x * (i - n / 2) * pix);
        ey[static_cast<std::size_t>(i)] = std::polar(1.0, -2.0 * kPi * nu * dir.y * (i - n / 2) * pix);
      }
      for (int iy = 0; iy < n; ++iy) {
        cd row{};
        for (int ix = 0; ix < n; ++ix) row += psf.at(ix, iy) * ex[static_cast<std::size_t>(ix)];
        s += row * ey[static_cast<std::size_t>(iy)];
      }
    }
    out.push_back(total > 0 ? std::abs(s) / total : 0.0);
  }
  if (!out.empty() && freq.front() == 0.0) out.front() = 1.0;
  return out;
}

}  // namespace

MtfCurve mtf_from_psf(const PsfGrid& psf, Vec2 tangential_dir, double max_freq, double step) {
  const double window_mm = psf.window_um * 1e-3;
  if (step <= 0) step = 1.0 / (2.0 * window_mm);
  if (max_freq <= 0) max_freq = psf.n / (2.0 * window_mm);
  MtfCurve c;
  const int count = static_cast<int>(std::floor(max_freq / step + 1e-9));
  for (int i = 0; i <= count; ++i) c.frequency.push_back(i * step);
  if (c.frequency.back() < max_freq - 1e-12) c.frequency.push_back(max_freq);

  const double len = std::hypot(tangential_dir.x, tangential_dir.y);
  const Vec2 t = len > 0 ? Vec2{tangential_dir.x / len, tangential_dir.y / len} : Vec2{0, 1};
  const Vec2 s{t.y, -t.x};
  c.tangential = directional_mtf(psf, t, c.frequency);
  c.sagittal = directional_mtf(psf, s, c.frequency);
  return c;
}

MtfScores mtf_scores(std::span<const double> f, std::span<const double> m, double cutoff, double sensor_height_mm) {
  MtfScores s;
  for (std::size_t i = 1; i < f.size() && f[i - 1] < cutoff; ++i) {
    if (f[i] <= cutoff) {
      s.area += 0.5 * (m[i] + m[i - 1]) * (f[i] - f[i - 1]);
    } else {
      const double mc = m[i - 1] + (m[i] - m[i - 1]) * (cutoff - f[i - 1]) / (f[i] - f[i - 1]);
      s.area += 0.5 * (mc + m[i - 1]) * (cutoff - f[i - 1]);
    }
  }
  s.mtf50 = cutoff;
  s.mtf50_flagged = true;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (m[i] > 0.5) continue;
    s.mtf50_flagged = false;
    if (m[i] == 0.5 || i == 0) {
      s.mtf50 = f[i];
    } else {
      s.mtf50 = f[i - 1] + (m[i - 1] - 0.5) / (m[i - 1] - m[i]) * (f[i] - f[i - 1]);
    }
    break;
  }
  s.mtf50_lwph = s.mtf50 * sensor_height_mm * 2.0;
  return s;
}

Vec2 tangential_direction(const ExitRayCache& cache, std::size_t emitter, const SensorPlane& sensor) {
  const auto ws = cache.wavelengths();
  for (std::size_t k = 0; k < ws.size(); ++k) {
    const Ray chief = land(cache.bundle(emitter, (ws.size() / 2 + k) % ws.size()).rays.front(), sensor);
    if (!chief.alive) continue;
    const Vec2 p = sensor_coords(sensor, chief.origin);
    const double r = std::hypot(p.x, p.y);
    if (r < 1e-9) return {0, 1};
    return {p.x / r, p.y / r};
  }
  return {0, 1};
}

// --- Objective -----------------------------------------------------------------------

namespace {

struct PairMtf {
  MtfScores t, s;
  double area_norm = 0;
};

PairMtf pair_mtf(const ExitRayCache& cache, const MeritConfig& cfg, std::size_t e, std::size_t j,
                 const SensorPlane& sensor) {
  const PsfGrid psf = channel_psf(cache, e, j, sensor, psf_options(cfg));
  const double cutoff = cfg.cutoff();
  const MtfCurve c = mtf_from_psf(psf, tangential_direction(cache, e, sensor), 2.0 * cutoff);
  PairMtf out;
  out.t = mtf_scores(c.frequency, c.tangential, cutoff, cache.system().sensor.height);
  out.s = mtf_scores(c.frequency, c.sagittal, cutoff, cache.system().sensor.height);
  out.area_norm = 0.5 * (out.t.area + out.s.area) / cutoff;
  return out;
}

}  // namespace

namespace {

// First channel with the same wavelength set, so duplicated channels share one PSF.
std::vector<std::size_t> channel_aliases(const ExitRayCache& cache) {
  std::vector<std::size_t> alias(cache.channel_count());
  for (std::size_t j = 0; j < alias.size(); ++j) {
    alias[j] = j;
    for (std::size_t k = 0; k < j; ++k)
      if (std::ranges::equal(cache.channel(k), cache.channel(j))) {
        alias[j] = k;
        break;
      }
  }
  return alias;
}

}  // namespace

std::vector<double> pair_values(const ExitRayCache& cache, const MeritConfig& config, double sensor_gap,
                                double tilt_deg, MeritMode mode) {
  const SensorPlane sensor = cache.sensor_plane(sensor_gap, tilt_deg);
  const auto alias = channel_aliases(cache);
  std::vector<double> out;
  out.reserve(cache.emitter_count() * cache.channel_count());
  for (std::size_t e = 0; e < cache.emitter_count(); ++e) {
    for (std::size_t j = 0; j < cache.channel_count(); ++j) {
      if (alias[j] != j) {
        out.push_back(out[out.size() - j + alias[j]]);
        continue;
      }
      switch (mode) {
        case MeritMode::Spot: {
          const std::vector<Vec2> hits = channel_hits(cache, e, j, sensor);
          if (hits.size() < 3) throw TooFewRays("fewer than 3 live rays on the sensor");
          out.push_back(spot_msse(hits) * 1e6);
          break;
        }
        case MeritMode::Opd: {
          const double v = opd_stat(cache, e, j, sensor);
          out.push_back(v * v);
          break;
        }
        case MeritMode::Mtf:
          out.push_back(-pair_mtf(cache, config, e, j, sensor).area_norm);
          break;
      }
    }
  }
  return out;
}

double objective(const ExitRayCache& cache, const MeritConfig& config, double sensor_gap, double tilt_deg,
                 MeritMode mode) {
  const std::vector<double> v = pair_values(cache, config, sensor_gap, tilt_deg, mode);
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double objective(const LensSystem& system, const MeritConfig& config, double sensor_gap) {
  const ExitRayCache cache(system, config, config.mode == MeritMode::Mtf);
  return objective(cache, config, sensor_gap, system.sensor_tilt(), config.mode);
}

SpotQuadratic spot_quadratic(const ExitRayCache& cache) {
  const double z0 = cache.sensor_plane(0.0, 0.0).center.z;
  SpotQuadratic q;
  for (std::size_t e = 0; e < cache.emitter_count(); ++e) {
    for (std::size_t j = 0; j < cache.channel_count(); ++j) {
      // Landing point at gap g is a + g b per ray.
      double sa[2] = {}, sb[2] = {}, saa = 0, sab = 0, sbb = 0;
      std::size_t n = 0;
      for (std::size_t w : cache.channel(j)) {
        const ExitBundle& bundle = cache.bundle(e, w);
        for (std::size_t i = 1; i <= bundle.samples; ++i) {
          const Ray& r = bundle.rays[i];
          if (!r.alive || r.direction.z == 0.0) continue;
          const double t = (z0 - r.origin.z) / r.direction.z;
          const double a[2] = {r.origin.x + t * r.direction.x, r.origin.y + t * r.direction.y};
          const double b[2] = {r.direction.x / r.direction.z, r.direction.y / r.direction.z};
          for (int k = 0; k < 2; ++k) {
            sa[k] += a[k];
            sb[k] += b[k];
            saa += a[k] * a[k];
            sab += a[k] * b[k];
            sbb += b[k] * b[k];
          }
          ++n;
        }
      }
      if (n < 3) throw TooFewRays("fewer than 3 live rays on the sensor");
      const double m = static_cast<double>(n);
      q.c0 += (saa - (sa[0] * sa[0] + sa[1] * sa[1]) / m) / m;
      q.c1 += 2 * (sab - (sa[0] * sb[0] + sa[1] * sb[1]) / m) / m;
      q.c2 += (sbb - (sb[0] * sb[0] + sb[1] * sb[1]) / m) / m;
    }
  }
  const double scale = 1e6 / static_cast<double>(cache.emitter_count() * cache.channel_count());
  q.c0 *= scale;
  q.c1 *= scale;
  q.c2 *= scale;
  return q;
}

// --- Illumination, report, calibration -------------------------------------------------

std::vector<double> relative_illumination(const ExitRayCache& cache, const SensorPlane& sensor) {
  std::vector<double> flux(cache.emitter_count(), 0.0);
  for (std::size_t e = 0; e < cache.emitter_count(); ++e) {
    std::size_t live = 0, total = 0;
    for (std::size_t w = 0; w < cache.wavelengths().size(); ++w) {
      const ExitBundle& b = cache.bundle(e, w);
      for (std::size_t i = 1; i <= b.samples; ++i) live += land(b.rays[i], sensor).alive;
      total += b.samples;
    }
    flux[e] = total ? cache.launch(e).flux * static_cast<double>(live) / static_cast<double>(total) : 0.0;
  }
  const double ref = flux.empty() ? 0.0 : flux.front();
  for (double& f : flux) f = ref > 0 ? f / ref : 0.0;
  return flux;
}

std::vector<double> relative_illumination(const LensSystem& system, const FieldSampling& fields,
                                          const PupilGrid& pupil) {
  MeritConfig cfg;
  cfg.fields = fields;
  cfg.pupil = pupil;
  cfg.wavelengths = ChannelWavelengths::single_line(kLambdaD);
  const ExitRayCache cache(system, cfg);
  const double gap = sensor_gap_or_focus(system, cache.paraxial());
  return relative_illumination(cache, cache.sensor_plane(gap, system.sensor_tilt()));
}

MeritReport evaluate_report(const ExitRayCache& cache, const MeritConfig& config, double sensor_gap, double tilt_deg,
                            bool with_mtf) {
  const SensorPlane sensor = cache.sensor_plane(sensor_gap, tilt_deg);
  MeritReport r;
  r.mode = config.mode;
  r.sensor_gap = sensor_gap;
  r.sensor_tilt = tilt_deg;
  const double cutoff = config.cutoff();
  const auto alias = channel_aliases(cache);
  std::vector<PairMtf> mtfs(cache.channel_count());
  double f_sum = 0;
  for (std::size_t e = 0; e < cache.emitter_count(); ++e) {
    for (std::size_t j = 0; j < cache.channel_count(); ++j) {
      PairScore p;
      p.emitter = e;
      p.channel = j;
      p.spot_rms_um = spot_stat(cache, e, j, sensor);
      p.opd_rms_waves = opd_stat(cache, e, j, sensor);
      if (with_mtf) {
        if (alias[j] != j) mtfs[j] = mtfs[alias[j]];
        else mtfs[j] = pair_mtf(cache, config, e, j, sensor);
        const PairMtf& m = mtfs[j];
        p.mtf_area_tangential = m.t.area / cutoff;
        p.mtf_area_sagittal = m.s.area / cutoff;
        p.mtf_area = m.area_norm;
        p.mtf50 = 0.5 * (m.t.mtf50 + m.s.mtf50);
        p.mtf50_lwph = p.mtf50 * cache.system().sensor.height * 2.0;
        p.mtf50_flagged = m.t.mtf50_flagged || m.s.mtf50_flagged;
      }
      switch (config.mode) {
        case MeritMode::Spot:
          f_sum += p.spot_rms_um * p.spot_rms_um;
          break;
        case MeritMode::Opd:
          f_sum += p.opd_rms_waves * p.opd_rms_waves;
          break;
        case MeritMode::Mtf:
          f_sum -= p.mtf_area;
          break;
      }
      r.mtf_area += p.mtf_area;
      r.mtf50 += p.mtf50;
      r.pairs.push_back(p);
    }
  }
  const double n = static_cast<double>(r.pairs.size());
  r.objective = f_sum / n;
  r.mtf_area /= n;
  r.mtf50 /= n;
  r.mtf50_lwph = r.mtf50 * cache.system().sensor.height * 2.0;
  r.relative_illumination = relative_illumination(cache, sensor);
  return r;
}

CalibrationTable calibration_table(const LensSystem& system, const MeritConfig& config, int density) {
  if (density < 1) throw ValidationError("calibration density must be >= 1");
  config.wavelengths.validate();
  const ParaxialResult px = paraxial_trace(system);
  if (px.afocal) throw AfocalError("system is afocal");
  const double gap = sensor_gap_or_focus(system, px);
  const TraceStack d_line(system, kLambdaD);

  CalibrationTable table;
  table.density = density;
  const std::size_t nch = config.wavelengths.channels.size();
  table.reference_channel = nch >= 2 ? 1 : 0;
  for (const auto& ch : config.wavelengths.channels) table.channel_wavelengths.push_back(ch[ch.size() / 2]);

  std::vector<TraceStack> stacks;
  std::vector<std::vector<std::size_t>> channel_stacks;
  for (const auto& ch : config.wavelengths.channels) {
    std::vector<std::size_t> idx;
    for (double w : ch) {
      idx.push_back(stacks.size());
      stacks.emplace_back(system, w);
      stacks.back().set_sensor(gap, system.sensor_tilt());
    }
    channel_stacks.push_back(std::move(idx));
  }

  const bool finite = system.tilt && system.tilt->object_distance > 0;
  double mag = 1;
  if (finite) {
    const auto m = paraxial_magnification(system, system.tilt->object_distance);
    if (!m || std::abs(*m) < 1e-12) throw AfocalError("no real image of the object plane");
    mag = *m;
  }

  const PupilGrid chief_only{0, 0};
  const SensorFormat& sf = system.sensor;
  for (int iy = 0; iy < density; ++iy) {
    for (int ix = 0; ix < density; ++ix) {
      CalibrationEntry entry;
      entry.field = {density == 1 ? 0.0 : -1.0 + 2.0 * ix / (density - 1),
                     density == 1 ? 0.0 : -1.0 + 2.0 * iy / (density - 1)};
      entry.predicted = {entry.field.x * sf.width / 2, entry.field.y * sf.height / 2};
      Emitter em;
      if (finite) {
        em = point_source(tilted_plane_point(-system.tilt->object_distance, system.tilt->object_plane_tilt,
                                             entry.predicted.x / mag, entry.predicted.y / mag));
      } else {
        em.at_infinity = true;
        em.direction = normalized(Vec3{entry.predicted.x / px.efl, entry.predicted.y / px.efl, 1.0});
      }
      const LaunchSet ls = aim_pupil(system, d_line, px, em, chief_only);
      for (std::size_t j = 0; j < nch; ++j) {
        Vec2 sum{0, 0};
        int live = 0;
        for (std::size_t si : channel_stacks[j]) {
          const TraceStack& st = stacks[si];
          Ray r = ls.ray(0, st.wavelength());
          trace_surfaces(st, r, st.surfaces().size(), false);
          propagate_to_sensor(st.sensor(), r);
          if (!r.alive) continue;
          const Vec2 p = sensor_coords(st.sensor(), r.origin);
          sum.x += p.x;
          sum.y += p.y;
          ++live;
        }
        if (live == 0) throw TooFewRays("chief ray lost during calibration");
        entry.image.push_back({sum.x / live, sum.y / live});
      }
      const Vec2 ref = entry.image[table.reference_channel];
      for (const Vec2& im : entry.image) {
        entry.displacement.push_back({im.x - entry.predicted.x, im.y - entry.predicted.y});
        entry.lateral_color.push_back({im.x - ref.x, im.y - ref.y});
      }
      entry.distortion = entry.displacement[table.reference_channel];
      table.entries.push_back(std::move(entry));
    }
  }
  return table;
}

}  // namespace lf
