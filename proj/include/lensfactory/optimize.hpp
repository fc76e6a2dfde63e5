#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lensfactory/merit.hpp"

namespace lf {

/// Paraxial image distance behind the last surface for the system's object conjugate.
/// Throws AfocalError for afocal systems or virtual images.
double init_sensor(const LensSystem& system);

struct BflOptions {
  double probe_step = 1e-3;  // mm, finite-difference step
  double initial_step = 0.5;  // mm, fallback step when the curvature is not positive
  double shrink = 0.5;
  int max_iterations = 100;
  double tolerance = 1e-9;  // mm
};

struct BflResult {
  double sensor_gap = 0;
  double objective = 0;
  int iterations = 0;
  int evaluations = 0;
};

/// 1-D descent on a scalar function of the sensor gap, starting at `start`, kept >= 0.
BflResult minimize_sensor_gap(const std::function<double(double)>& f, double start, const BflOptions& options = {});

/// Sensor-gap optimum using only the cached exit rays.
BflResult optimize_bfl(const ExitRayCache& cache, const MeritConfig& config, MeritMode mode, double start,
                       const BflOptions& options = {});

/// Same search, re-tracing every ray through the whole system at every evaluation.
BflResult optimize_bfl_retrace(ExitRayCache& cache, const MeritConfig& config, MeritMode mode, double start,
                               const BflOptions& options = {});

/// Central differences at h0 and h0/2 combined by one Richardson step. A non-finite
/// probe halves h0 once; a second failure throws Infeasible.
std::vector<double> richardson_gradient(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> x, double h0);

enum class OptStage { SpotOrOpd, Mtf };
std::string_view to_string(OptStage stage);

struct TraceRecord {
  OptStage stage = OptStage::SpotOrOpd;
  int iteration = 0;
  double objective = 0;
  std::vector<double> gaps;
  double sensor_gap = 0;
};

/// One JSON object per line.
std::string to_json_line(const TraceRecord& record);

struct OptOptions {
  MeritConfig merit;  // merit.mode selects the stage-1 statistic (spot or opd)
  std::vector<double> init_spacings{1, 2, 3, 4, 5, 6};
  bool initialize = true;  // best-of-init_spacings start; otherwise start from the system's gaps
  double initial_step = 0.5;
  double shrink = 0.5;
  int max_shrinks = 12;
  int max_iterations = 200;
  std::vector<double> local_steps{0.1, 0.25, 0.5};
  double rel_tol = 1e-5;
  double gradient_step = 0.01;
  double barrier_fraction = 0.3;
  BflOptions bfl;
  std::function<void(const TraceRecord&)> on_step;
};

struct OptState {
  std::vector<double> gaps;
  double sensor_gap = 0;
  double objective = 0;
  OptStage stage = OptStage::SpotOrOpd;
  int iterations = 0;
  int evaluations = 0;
  int local_moves = 0;
  bool converged = false;
  // Two-stage bookkeeping.
  double stage1_objective = 0;
  double stage1_mtf_area = 0;
  double mtf_area = 0;
  bool stage2_accepted = false;

  /// The input system with the optimized gaps and sensor gap.
  LensSystem apply(LensSystem system) const;
};

/// Merit of a gap vector with the sensor gap re-optimized; infinite when infeasible or
/// when more than barrier_fraction of the reference live rays die.
struct GapEvaluation {
  double objective = 0;
  double sensor_gap = 0;
  std::size_t live = 0;
};

class GapObjective {
 public:
  /// Keeps a reference to options. Fields default to the system's sensor diagonal.
  GapObjective(LensSystem system, const OptOptions& options, MeritMode mode);

  GapEvaluation evaluate(std::span<const double> gaps) const;
  double operator()(std::span<const double> gaps) const { return evaluate(gaps).objective; }
  void set_reference_live(std::size_t live) { reference_live_ = live; }
  int evaluations() const { return evaluations_; }
  const LensSystem& system() const { return system_; }
  /// Per-gap lower bounds (contact) and frozen flags.
  std::span<const double> lower_bounds() const { return lower_; }
  bool frozen(std::size_t i) const { return system_.gap_frozen(i); }

 private:
  LensSystem system_;
  const OptOptions& options_;
  MeritConfig merit_;
  MeritMode mode_;
  std::vector<double> lower_;
  std::size_t reference_live_ = 0;
  mutable int evaluations_ = 0;
};

/// Gradient descent with backtracking line search plus coordinate grid search on the
/// free gaps, the sensor gap re-optimized at every evaluation. Throws Infeasible.
OptState optimize_gaps(const LensSystem& system, const OptOptions& options, MeritMode mode);

/// Spot (or OPD) stage followed by an MTF-area stage started from its optimum; the
/// second stage is kept only if it does not lower the MTF area.
OptState optimize_two_stage(const LensSystem& system, const OptOptions& options);

/// Mean normalized MTF area at the given sensor gap.
double mtf_area_at(const LensSystem& system, const MeritConfig& config, double sensor_gap);

}  // namespace lf
