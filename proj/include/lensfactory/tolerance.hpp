#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lensfactory/merit.hpp"
#include "lensfactory/rng.hpp"

namespace lf {

struct ToleranceConfig {
  double element_sigma_um = 20;  // lens parts and the stop
  double element_cap_um = 100;
  double sensor_sigma_um = 100;
  double sensor_cap_um = 300;
  std::size_t runs = 20000;
  std::uint64_t seed = 0;
  MeritMode refocus_mode = MeritMode::Spot;
  std::size_t workers = 1;

  /// Throws ValidationError.
  void validate() const;
};

/// N(0, sigma^2) conditioned on |x| <= cap, by rejection. sigma == 0 returns 0.
double truncated_normal(Rng& rng, double sigma, double cap);
/// Standard deviation of that distribution.
double truncated_normal_stddev(double sigma, double cap);

/// One assembly draw, in mm. Axial shifts move a component along z and take the
/// difference out of the neighbouring gaps.
struct Perturbation {
  std::vector<double> axial;        // per component
  std::vector<Decenter> decenters;  // per component
  double sensor_shift = 0;          // applied after refocusing
};

Perturbation draw_perturbation(const LensSystem& system, const ToleranceConfig& config, Rng& rng);

/// Axial shifts and decenters; gaps that would go negative are clamped to contact.
LensSystem apply_perturbation(const LensSystem& system, const Perturbation& p, bool* clamped = nullptr);

struct PerturbedSystem {
  LensSystem system;
  double focus_gap = 0;  // refocused sensor gap before the sensor shift
  bool clamped = false;
};

/// Refocuses the sensor with the config's refocus statistic.
double refocus(const LensSystem& system, const MeritConfig& merit, MeritMode mode);

/// Draw, apply, refocus, then shift the sensor.
PerturbedSystem perturb(const LensSystem& system, const MeritConfig& merit, const ToleranceConfig& config, Rng& rng);
PerturbedSystem perturb(const LensSystem& system, const MeritConfig& merit, const ToleranceConfig& config,
                        const Perturbation& p);

/// Stream for run `index`; runs are independent of the worker count.
Rng run_stream(const ToleranceConfig& config, std::size_t index);

struct Distribution {
  double p5 = 0, p25 = 0, p50 = 0, p75 = 0, p95 = 0;
  double mean = 0;
};

/// Linear-interpolated percentiles. Empty input gives zeros.
Distribution summarize(std::vector<double> values);

struct ToleranceEntry {
  std::size_t emitter = 0;
  std::size_t channel = 0;
  double nominal_mtf50 = 0;  // cycles/mm
  Distribution mtf50;
};

struct ToleranceReport {
  std::size_t runs = 0;
  std::size_t failed = 0;   // scored 0
  std::size_t clamped = 0;  // some gap went to contact
  /// The unperturbed system after the same refocus.
  MeritReport nominal;
  std::vector<ToleranceEntry> entries;  // emitter-major, as in MeritReport::pairs
  std::vector<std::vector<double>> raw;  // per run, mtf50 per entry; empty unless kept
};

ToleranceReport run_tolerance(const LensSystem& system, const MeritConfig& merit, const ToleranceConfig& config,
                              bool keep_raw = false);

/// run,e0c0,e0c1,... with one row per run. Requires raw scores.
std::string raw_scores_csv(const ToleranceReport& report);

}  // namespace lf
