#include "lensfactory/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <json.hpp>

#include "lensfactory/error.hpp"

namespace lf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;

double guarded(const std::function<double()>& f) {
  try {
    const double v = f();
    return std::isfinite(v) ? v : kInf;
  } catch (const Error&) {
    return kInf;
  }
}

bool improves(double before, double after, double rel_tol) {
  return std::isfinite(after) && before - after > rel_tol * std::max(std::abs(before), 1e-300);
}

MeritMode stage1_mode(const MeritConfig& cfg) { return cfg.mode == MeritMode::Opd ? MeritMode::Opd : MeritMode::Spot; }

MeritConfig with_fixed_fields(MeritConfig cfg, const LensSystem& system) {
  if (cfg.fields.emitters.empty()) cfg.fields = default_fields(system);
  return cfg;
}

}  // namespace

double init_sensor(const LensSystem& system) {
  const double object = system.tilt && system.tilt->object_distance > 0 ? system.tilt->object_distance : 0.0;
  const auto s = paraxial_image_distance(system, object);
  if (!s) throw AfocalError("no real paraxial focus behind the last surface");
  return *s;
}

BflResult minimize_sensor_gap(const std::function<double(double)>& f, double start, const BflOptions& opt) {
  BflResult r;
  double x = std::max(0.0, start);
  double fx = f(x);
  r.evaluations = 1;
  if (!std::isfinite(fx)) throw Infeasible("merit is not finite at the starting sensor gap");

  for (; r.iterations < opt.max_iterations; ++r.iterations) {
    const double h = opt.probe_step;
    const double xl = std::max(0.0, x - h), xr = x + h;
    const double fl = f(xl), fr = f(xr);
    r.evaluations += 2;
    if (!std::isfinite(fl) || !std::isfinite(fr)) break;
    const double g = (fr - fl) / (xr - xl);
    if (g == 0.0) break;
    const double curv = xl == x - h ? (fr - 2 * fx + fl) / (h * h) : 0.0;
    const double step = curv > 0 ? -g / curv : (g > 0 ? -opt.initial_step : opt.initial_step);

    bool accepted = false;
    double t = 1.0, xn = x, fn = fx;
    for (int k = 0; k < 40; ++k, t *= opt.shrink) {
      xn = std::max(0.0, x + t * step);
      if (xn == x) break;
      fn = f(xn);
      ++r.evaluations;
      if (std::isfinite(fn) && fn <= fx + kArmijo * g * (xn - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double moved = std::abs(xn - x);
    x = xn;
    fx = fn;
    if (moved < opt.tolerance) break;
  }
  r.sensor_gap = x;
  r.objective = fx;
  return r;
}

BflResult optimize_bfl(const ExitRayCache& cache, const MeritConfig& config, MeritMode mode, double start,
                       const BflOptions& options) {
  const double tilt = cache.system().sensor_tilt();
  if (mode == MeritMode::Spot && tilt == 0.0) {
    SpotQuadratic q;
    try {
      q = spot_quadratic(cache);
    } catch (const Error&) {
      throw Infeasible("merit is not finite at the starting sensor gap");
    }
    if (q.c2 > 0 && std::isfinite(q.c1)) {
      BflResult r;
      r.sensor_gap = std::max(0.0, -q.c1 / (2 * q.c2));
      r.objective = guarded([&] { return objective(cache, config, r.sensor_gap, tilt, mode); });
      r.evaluations = 2;
      if (std::isfinite(r.objective)) return r;
    }
  }
  return minimize_sensor_gap(
      [&](double gap) { return guarded([&] { return objective(cache, config, gap, tilt, mode); }); }, start, options);
}

BflResult optimize_bfl_retrace(ExitRayCache& cache, const MeritConfig& config, MeritMode mode, double start,
                               const BflOptions& options) {
  const double tilt = cache.system().sensor_tilt();
  return minimize_sensor_gap(
      [&](double gap) {
        cache.retrace();
        return guarded([&] { return objective(cache, config, gap, tilt, mode); });
      },
      start, options);
}

std::vector<double> richardson_gradient(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> x, double h0) {
  std::vector<double> probe(x.begin(), x.end());
  const auto central = [&](std::size_t i, double h) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    return (fp - fm) / (2 * h);
  };
  std::vector<double> g(x.size());
  bool reduced = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (;;) {
      const double coarse = central(i, h0);
      const double fine = central(i, h0 / 2);
      if (std::isfinite(coarse) && std::isfinite(fine)) {
        g[i] = (4 * fine - coarse) / 3;
        break;
      }
      if (reduced) throw Infeasible("non-finite merit at gradient probes");
      reduced = true;
      h0 /= 2;
    }
  }
  return g;
}

std::string_view to_string(OptStage stage) { return stage == OptStage::Mtf ? "mtf" : "spot_or_opd"; }

std::string to_json_line(const TraceRecord& r) {
  const nlohmann::json j{{"stage", to_string(r.stage)},
                         {"iteration", r.iteration},
                         {"objective", r.objective},
                         {"gaps", r.gaps},
                         {"sensor_gap", r.sensor_gap}};
  return j.dump();
}

LensSystem OptState::apply(LensSystem system) const {
  system.gaps = gaps;
  system.sensor_gap = sensor_gap;
  return system;
}

GapObjective::GapObjective(LensSystem system, const OptOptions& options, MeritMode mode)
    : system_(std::move(system)), options_(options), merit_(options.merit), mode_(mode) {
  system_.validate();
  merit_ = with_fixed_fields(merit_, system_);
  merit_.mode = mode;
  for (std::size_t i = 0; i < system_.gaps.size(); ++i) lower_.push_back(contact_gap(system_, i));
}

GapEvaluation GapObjective::evaluate(std::span<const double> gaps) const {
  ++evaluations_;
  GapEvaluation out;
  out.objective = kInf;
  LensSystem sys = system_;
  for (std::size_t i = 0; i < sys.gaps.size(); ++i)
    if (!frozen(i)) sys.gaps[i] = std::max(lower_[i], gaps[i]);
  try {
    const ExitRayCache cache(sys, merit_, mode_ == MeritMode::Mtf);
    for (std::size_t e = 0; e < cache.emitter_count(); ++e)
      for (std::size_t w = 0; w < cache.wavelengths().size(); ++w) out.live += cache.bundle(e, w).live_samples;
    if (reference_live_ > 0 &&
        static_cast<double>(out.live) < (1.0 - options_.barrier_fraction) * static_cast<double>(reference_live_))
      return out;
    double start = init_sensor(sys);
    if (mode_ == MeritMode::Mtf) start = optimize_bfl(cache, merit_, MeritMode::Spot, start, options_.bfl).sensor_gap;
    const BflResult r = optimize_bfl(cache, merit_, mode_, start, options_.bfl);
    out.objective = r.objective;
    out.sensor_gap = r.sensor_gap;
  } catch (const Error&) {
    out.objective = kInf;
  }
  return out;
}

OptState optimize_gaps(const LensSystem& system, const OptOptions& options, MeritMode mode) {
  GapObjective obj(system, options, mode);
  const auto lower = obj.lower_bounds();
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < system.gaps.size(); ++i)
    if (!obj.frozen(i)) free.push_back(i);
  const auto clamp = [&](std::vector<double> x) {
    for (std::size_t i : free) x[i] = std::max(lower[i], x[i]);
    return x;
  };

  OptState st;
  st.stage = mode == MeritMode::Mtf ? OptStage::Mtf : OptStage::SpotOrOpd;
  std::vector<double> x;
  GapEvaluation cur;
  cur.objective = kInf;
  if (options.initialize && !free.empty()) {
    for (double a : options.init_spacings) {
      std::vector<double> cand = system.gaps;
      for (std::size_t i : free) cand[i] = a;
      cand = clamp(cand);
      const GapEvaluation e = obj.evaluate(cand);
      if (e.objective < cur.objective) {
        cur = e;
        x = cand;
      }
    }
  } else {
    x = clamp(system.gaps);
    cur = obj.evaluate(x);
  }
  if (!std::isfinite(cur.objective)) throw Infeasible("no feasible initial gap spacing");
  obj.set_reference_live(cur.live);

  const auto report = [&] {
    if (options.on_step) options.on_step({st.stage, st.iterations, cur.objective, x, cur.sensor_gap});
  };
  report();

  const auto full = [&](std::span<const double> sub) {
    std::vector<double> v = x;
    for (std::size_t k = 0; k < free.size(); ++k) v[free[k]] = sub[k];
    return v;
  };

  while (st.iterations < options.max_iterations && !free.empty()) {
    bool moved = false;

    std::vector<double> sub;
    for (std::size_t i : free) sub.push_back(x[i]);
    std::vector<double> g;
    try {
      g = richardson_gradient([&](std::span<const double> s) { return obj(full(s)); }, sub, options.gradient_step);
    } catch (const Infeasible&) {
      g.assign(free.size(), 0.0);
    }
    double gnorm = 0;
    for (double v : g) gnorm += v * v;
    gnorm = std::sqrt(gnorm);

    if (gnorm > 0 && std::isfinite(gnorm)) {
      double t = options.initial_step;
      for (int k = 0; k < options.max_shrinks && !moved; ++k, t *= options.shrink) {
        std::vector<double> xn = x;
        double slope = 0;
        for (std::size_t j = 0; j < free.size(); ++j) xn[free[j]] = x[free[j]] - t * g[j] / gnorm;
        xn = clamp(xn);
        for (std::size_t j = 0; j < free.size(); ++j) slope += g[j] * (xn[free[j]] - x[free[j]]);
        if (xn == x) break;
        const GapEvaluation e = obj.evaluate(xn);
        if (e.objective <= cur.objective + kArmijo * slope && improves(cur.objective, e.objective, options.rel_tol)) {
          x = std::move(xn);
          cur = e;
          moved = true;
        }
      }
    }

    if (!moved) {
      for (std::size_t i : free) {
        for (double s : options.local_steps) {
          for (double sign : {1.0, -1.0}) {
            if (moved) break;
            std::vector<double> xn = x;
            xn[i] = std::max(lower[i], x[i] + sign * s);
            if (xn[i] == x[i]) continue;
            const GapEvaluation e = obj.evaluate(xn);
            if (improves(cur.objective, e.objective, options.rel_tol)) {
              x = std::move(xn);
              cur = e;
              moved = true;
              ++st.local_moves;
            }
          }
        }
      }
    }

    if (!moved) {
      st.converged = true;
      break;
    }
    ++st.iterations;
    report();
  }
  if (free.empty()) st.converged = true;

  st.gaps = x;
  st.sensor_gap = cur.sensor_gap;
  st.objective = cur.objective;
  st.evaluations = obj.evaluations();
  return st;
}

double mtf_area_at(const LensSystem& system, const MeritConfig& config, double sensor_gap) {
  const MeritConfig cfg = with_fixed_fields(config, system);
  const ExitRayCache cache(system, cfg, true);
  return -objective(cache, cfg, sensor_gap, system.sensor_tilt(), MeritMode::Mtf);
}

OptState optimize_two_stage(const LensSystem& system, const OptOptions& options) {
  OptOptions opts = options;
  opts.merit = with_fixed_fields(options.merit, system);

  OptState s1 = optimize_gaps(system, opts, stage1_mode(opts.merit));
  const LensSystem sys1 = s1.apply(system);
  s1.stage1_objective = s1.objective;
  s1.stage1_mtf_area = mtf_area_at(sys1, opts.merit, s1.sensor_gap);
  s1.mtf_area = s1.stage1_mtf_area;

  OptOptions o2 = opts;
  o2.initialize = false;
  try {
    OptState s2 = optimize_gaps(sys1, o2, MeritMode::Mtf);
    s2.mtf_area = -s2.objective;
    if (s2.mtf_area >= s1.stage1_mtf_area) {
      s2.stage1_objective = s1.stage1_objective;
      s2.stage1_mtf_area = s1.stage1_mtf_area;
      s2.stage2_accepted = true;
      s2.iterations += s1.iterations;
      s2.evaluations += s1.evaluations;
      s2.local_moves += s1.local_moves;
      return s2;
    }
    s1.evaluations += s2.evaluations;
  } catch (const Infeasible&) {
  }
  return s1;
}

}  // namespace lf
