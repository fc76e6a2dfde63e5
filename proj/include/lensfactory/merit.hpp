#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lensfactory/optics.hpp"

namespace lf {

enum class MeritMode { Spot, Opd, Mtf };

std::string_view to_string(MeritMode mode);
std::optional<MeritMode> parse_merit_mode(std::string_view text);

struct MeritConfig {
  MeritMode mode = MeritMode::Spot;
  FieldSampling fields;  // empty: relative fields {0, 0.5, 1} of the semi-diagonal
  ChannelWavelengths wavelengths;
  PupilGrid pupil;
  double psf_window_um = 65.0;
  int psf_grid = 128;
  double mtf_cutoff = 0.0;  // cycles/mm; <= 0 selects the sensor Nyquist frequency
  double pixel_pitch_um = 4.3;
  int max_pupil_grid = 512;
  int fit_degree = 8;

  double cutoff() const;
  /// Throws ValidationError.
  void validate() const;
};

/// Infinite-conjugate fields along +y at the given fractions of a half field angle.
FieldSampling relative_fields(double half_fov_deg, std::span<const double> fractions);
FieldSampling relative_fields(double half_fov_deg);

/// Sensor-diagonal fields {0, 0.5, 1} from the system's paraxial focal length.
FieldSampling default_fields(const LensSystem& system);

// --- Exit-ray cache ----------------------------------------------------------

/// Rays of one emitter at one wavelength, frozen just after the last optical surface.
/// Index 0 is the chief ray, then `samples` pupil samples, then `edges` rim rays.
struct ExitBundle {
  std::vector<Ray> rays;
  std::size_t samples = 0;
  std::size_t edges = 0;
  std::size_t live_samples = 0;
};

class ExitRayCache {
 public:
  ExitRayCache(const LensSystem& system, const MeritConfig& config, bool with_edges = false);

  const LensSystem& system() const { return system_; }
  const ParaxialResult& paraxial() const { return paraxial_; }
  std::size_t emitter_count() const { return emitters_.size(); }
  const Emitter& emitter(std::size_t e) const { return emitters_[e]; }
  const LaunchSet& launch(std::size_t e) const { return launches_[e]; }
  /// Distinct wavelengths over all channels, ascending.
  std::span<const double> wavelengths() const { return wavelengths_; }
  /// Indices into wavelengths() for channel j.
  std::span<const std::size_t> channel(std::size_t j) const { return channels_[j]; }
  std::size_t channel_count() const { return channels_.size(); }
  const ExitBundle& bundle(std::size_t e, std::size_t w) const { return bundles_[e * wavelengths_.size() + w]; }
  double last_z() const { return last_z_; }
  bool has_edges() const { return with_edges_; }
  /// Optical surfaces each cached ray went through.
  std::size_t surface_count() const { return surface_count_; }
  /// True when the system has the same gaps the cache was built for.
  bool matches(const LensSystem& system) const { return system.gaps == system_.gaps; }
  /// Re-traces every ray from its launch through all surfaces. The result is identical
  /// to a fresh cache; used as the full-retrace reference.
  void retrace();

  SensorPlane sensor_plane(double sensor_gap, double tilt_deg) const {
    return make_sensor_plane(last_z_ + sensor_gap, tilt_deg);
  }

 private:
  LensSystem system_;
  ParaxialResult paraxial_;
  std::vector<Emitter> emitters_;
  std::vector<LaunchSet> launches_;
  std::vector<double> wavelengths_;
  std::vector<std::vector<std::size_t>> channels_;
  std::vector<ExitBundle> bundles_;
  std::vector<TraceStack> stacks_;
  double last_z_ = 0;
  std::size_t surface_count_ = 0;
  bool with_edges_ = false;
};

/// Moves a copy of an exit ray onto the sensor plane.
inline Ray land(const Ray& exit_ray, const SensorPlane& sensor) {
  Ray r = exit_ray;
  propagate_to_sensor(sensor, r);
  return r;
}

// --- Spot and OPD --------------------------------------------------------------

/// Mean squared distance of points from their centroid, in the input units squared.
double spot_msse(std::span<const Vec2> hits);

/// Live pupil-sample hits (mm, sensor coordinates) of a channel, pooled over its wavelengths.
std::vector<Vec2> channel_hits(const ExitRayCache& cache, std::size_t emitter, std::size_t channel,
                               const SensorPlane& sensor);

/// Pooled RMS spot radius in um. Throws TooFewRays below 3 live rays.
double spot_stat(const ExitRayCache& cache, std::size_t emitter, std::size_t channel, const SensorPlane& sensor);
double spot_stat(const LensSystem& system, const Emitter& emitter, std::span<const double> wavelengths,
                 const PupilGrid& pupil = {});

/// Pooled RMS optical path difference in waves against a sphere centered on each
/// wavelength's centroid through the exit pupil. Throws TooFewRays.
double opd_stat(const ExitRayCache& cache, std::size_t emitter, std::size_t channel, const SensorPlane& sensor);
double opd_stat(const LensSystem& system, const Emitter& emitter, std::span<const double> wavelengths,
                const PupilGrid& pupil = {});

/// Per-(emitter, channel) values f in emitter-major order: spot MSSE (um^2), OPD mean square
/// (waves^2) or minus the normalized MTF area, depending on the mode.
std::vector<double> pair_values(const ExitRayCache& cache, const MeritConfig& config, double sensor_gap,
                                double tilt_deg, MeritMode mode);

/// Mean of pair_values (the aggregate objective F).
double objective(const ExitRayCache& cache, const MeritConfig& config, double sensor_gap, double tilt_deg,
                 MeritMode mode);
double objective(const LensSystem& system, const MeritConfig& config, double sensor_gap);

/// Spot objective on an untilted sensor, exactly c0 + c1 g + c2 g^2 in the sensor gap g.
struct SpotQuadratic {
  double c0 = 0, c1 = 0, c2 = 0;
  double operator()(double gap) const { return c0 + gap * (c1 + gap * c2); }
};
/// Throws TooFewRays.
SpotQuadratic spot_quadratic(const ExitRayCache& cache);

// --- PSF and MTF ---------------------------------------------------------------

struct PsfGrid {
  int n = 0;
  double window_um = 0;
  double wavelength_nm = 0;  // 0 for a channel mix
  Vec2 center_mm;            // sensor coordinates of the patch center
  std::vector<double> values;  // row-major, row = sensor y

  double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * n + ix]; }
  double pixel_um() const { return window_um / n; }
  /// Sensor offset (um) of pixel index i relative to the center; pixel n/2 is the center.
  double offset_um(int i) const { return (i - n / 2) * pixel_um(); }
};

struct PsfOptions {
  double window_um = 65.0;
  int grid = 128;
  int max_pupil_grid = 512;
  int fit_degree = 8;
  std::optional<Vec2> center_mm;  // default: chief-ray hit
};

PsfOptions psf_options(const MeritConfig& config);

/// Diffraction PSF through a fitted exit-pupil wavefront (separable Debye sum).
/// Throws TooFewRays. The cache should be built with edge rays.
PsfGrid render_psf(const ExitRayCache& cache, std::size_t emitter, std::size_t wavelength_index,
                   const SensorPlane& sensor, const PsfOptions& options = {});
PsfGrid render_psf(const LensSystem& system, const Emitter& emitter, double wavelength_nm, double sensor_gap,
                   const PsfOptions& options = {}, const PupilGrid& pupil = {});

/// Same field by a direct Rayleigh-Sommerfeld sum from the reference sphere; slow, for validation.
PsfGrid render_psf_direct(const ExitRayCache& cache, std::size_t emitter, std::size_t wavelength_index,
                          const SensorPlane& sensor, const PsfOptions& options, int pupil_samples = 64);

struct MtfCurve {
  std::vector<double> frequency;  // cycles/mm
  std::vector<double> tangential;
  std::vector<double> sagittal;
};

/// |FT| of the PSF along the tangential direction (unit, sensor coordinates) and its
/// perpendicular, normalized to 1 at zero frequency. max_freq <= 0 uses the grid Nyquist
/// frequency; step <= 0 uses 1 / (2 window).
MtfCurve mtf_from_psf(const PsfGrid& psf, Vec2 tangential_dir = {0, 1}, double max_freq = 0, double step = 0);

struct MtfScores {
  double area = 0;   // cycles/mm
  double mtf50 = 0;  // cycles/mm
  double mtf50_lwph = 0;
  bool mtf50_flagged = false;  // never dropped to 0.5; mtf50 set to the cutoff
};

MtfScores mtf_scores(std::span<const double> frequency, std::span<const double> mtf, double cutoff,
                     double sensor_height_mm);

/// Channel PSF: mean of the channel's wavelength PSFs on a common center.
PsfGrid channel_psf(const ExitRayCache& cache, std::size_t emitter, std::size_t channel, const SensorPlane& sensor,
                    const PsfOptions& options);

/// Tangential direction for an emitter: radial direction of its chief hit, +y on axis.
Vec2 tangential_direction(const ExitRayCache& cache, std::size_t emitter, const SensorPlane& sensor);

// --- Illumination, report, calibration --------------------------------------------

/// Live-ray flux per emitter, normalized by emitter 0.
std::vector<double> relative_illumination(const ExitRayCache& cache, const SensorPlane& sensor);
std::vector<double> relative_illumination(const LensSystem& system, const FieldSampling& fields,
                                          const PupilGrid& pupil = {});

struct PairScore {
  std::size_t emitter = 0;
  std::size_t channel = 0;
  double spot_rms_um = 0;
  double opd_rms_waves = 0;
  double mtf_area = 0;  // mean of tangential and sagittal areas over the cutoff, in [0, 1]
  double mtf_area_tangential = 0;
  double mtf_area_sagittal = 0;
  double mtf50 = 0;  // cycles/mm, mean of both orientations
  double mtf50_lwph = 0;
  bool mtf50_flagged = false;
};

struct MeritReport {
  MeritMode mode = MeritMode::Spot;
  double sensor_gap = 0;
  double sensor_tilt = 0;
  double objective = 0;
  double mtf_area = 0;  // mean over pairs
  double mtf50 = 0;     // mean over pairs, cycles/mm
  double mtf50_lwph = 0;
  std::vector<PairScore> pairs;
  std::vector<double> relative_illumination;
};

/// Full report at a sensor position. MTF entries are computed when with_mtf is set
/// (the cache must then carry edge rays).
MeritReport evaluate_report(const ExitRayCache& cache, const MeritConfig& config, double sensor_gap,
                            double tilt_deg, bool with_mtf = true);

struct CalibrationEntry {
  Vec2 field;      // relative field position in [-1, 1]^2
  Vec2 predicted;  // paraxial image position, mm
  std::vector<Vec2> image;          // per channel chief-ray hit, mm
  std::vector<Vec2> displacement;   // per channel, image minus predicted
  std::vector<Vec2> lateral_color;  // per channel, image minus the reference channel image
  Vec2 distortion;                  // displacement of the reference channel
};

struct CalibrationTable {
  int density = 0;
  std::size_t reference_channel = 1;
  std::vector<double> channel_wavelengths;  // representative wavelength per channel, nm
  std::vector<CalibrationEntry> entries;  // row-major over (y, x)
};

/// Chief-ray image positions on a density x density grid of relative sensor positions.
CalibrationTable calibration_table(const LensSystem& system, const MeritConfig& config, int density);

}  // namespace lf
