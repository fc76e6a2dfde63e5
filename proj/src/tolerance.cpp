#include "lensfactory/tolerance.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include "lensfactory/error.hpp"
#include "lensfactory/optimize.hpp"

namespace lf {

void ToleranceConfig::validate() const {
  if (!(element_sigma_um >= 0 && sensor_sigma_um >= 0)) throw ValidationError("sigmas must be >= 0");
  if (!(element_cap_um >= element_sigma_um)) throw ValidationError("element cap must be >= its sigma");
  if (!(sensor_cap_um >= sensor_sigma_um)) throw ValidationError("sensor cap must be >= its sigma");
  if (runs < 1) throw ValidationError("runs must be >= 1");
}

double truncated_normal(Rng& rng, double sigma, double cap) {
  if (sigma == 0) return 0;
  for (;;) {
    const double x = sigma * rng.normal();
    if (std::abs(x) <= cap) return x;
  }
}

double truncated_normal_stddev(double sigma, double cap) {
  if (sigma == 0) return 0;
  const double a = cap / sigma;
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2 * std::numbers::pi);
  const double mass = std::erf(a / std::numbers::sqrt2);
  return sigma * std::sqrt(1 - 2 * a * pdf / mass);
}

Perturbation draw_perturbation(const LensSystem& system, const ToleranceConfig& cfg, Rng& rng) {
  const double s = cfg.element_sigma_um * 1e-3, t = cfg.element_cap_um * 1e-3;
  Perturbation p;
  for (std::size_t i = 0; i < system.components.size(); ++i) {
    p.axial.push_back(truncated_normal(rng, s, t));
    const double dx = truncated_normal(rng, s, t);
    const double dy = truncated_normal(rng, s, t);
    p.decenters.push_back({dx, dy});
  }
  p.sensor_shift = truncated_normal(rng, cfg.sensor_sigma_um * 1e-3, cfg.sensor_cap_um * 1e-3);
  return p;
}

LensSystem apply_perturbation(const LensSystem& system, const Perturbation& p, bool* clamped) {
  const std::size_t n = system.components.size();
  if (p.axial.size() != n || p.decenters.size() != n) throw ValidationError("perturbation does not fit the system");
  LensSystem out = system;
  // The first vertex stays at z = 0, so its shift goes to the object instead.
  if (out.tilt && out.tilt->object_distance > 0) out.tilt->object_distance += p.axial[0];
  for (std::size_t i = 0; i < out.gaps.size(); ++i) out.gaps[i] += p.axial[i + 1] - p.axial[i];
  out.sensor_gap -= p.axial[n - 1];
  if (out.decenters.empty()) out.decenters.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    out.decenters[i].dx += p.decenters[i].dx;
    out.decenters[i].dy += p.decenters[i].dy;
  }
  bool hit = false;
  for (std::size_t i = 0; i < out.gaps.size(); ++i) {
    const double floor = contact_gap(out, i);
    if (out.gaps[i] < floor) {
      out.gaps[i] = floor;
      hit = true;
    }
  }
  if (clamped) *clamped = hit;
  return out;
}

double refocus(const LensSystem& system, const MeritConfig& merit, MeritMode mode) {
  const ExitRayCache cache(system, merit);
  return optimize_bfl(cache, merit, mode, system.sensor_gap).sensor_gap;
}

PerturbedSystem perturb(const LensSystem& system, const MeritConfig& merit, const ToleranceConfig& cfg,
                        const Perturbation& p) {
  PerturbedSystem out;
  out.system = apply_perturbation(system, p, &out.clamped);
  out.focus_gap = refocus(out.system, merit, cfg.refocus_mode);
  out.system.sensor_gap = std::max(0.0, out.focus_gap + p.sensor_shift);
  return out;
}

PerturbedSystem perturb(const LensSystem& system, const MeritConfig& merit, const ToleranceConfig& cfg, Rng& rng) {
  return perturb(system, merit, cfg, draw_perturbation(system, cfg, rng));
}

Rng run_stream(const ToleranceConfig& cfg, std::size_t index) {
  return Rng(substream_seed(cfg.seed, {0x70u, index}));
}

Distribution summarize(std::vector<double> v) {
  Distribution d;
  if (v.empty()) return d;
  std::sort(v.begin(), v.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  d.p5 = at(0.05);
  d.p25 = at(0.25);
  d.p50 = at(0.50);
  d.p75 = at(0.75);
  d.p95 = at(0.95);
  double sum = 0;
  for (double x : v) sum += x;
  d.mean = sum / static_cast<double>(v.size());
  return d;
}

namespace {

MeritReport score(const LensSystem& system, const MeritConfig& merit) {
  const ExitRayCache cache(system, merit, true);
  return evaluate_report(cache, merit, system.sensor_gap, system.sensor_tilt(), true);
}

struct RunResult {
  std::vector<double> mtf50;
  bool failed = false;
  bool clamped = false;
};

}  // namespace

ToleranceReport run_tolerance(const LensSystem& system, const MeritConfig& merit, const ToleranceConfig& cfg,
                              bool keep_raw) {
  cfg.validate();
  LensSystem focused = system;
  focused.sensor_gap = refocus(system, merit, cfg.refocus_mode);
  ToleranceReport report;
  report.runs = cfg.runs;
  report.nominal = score(focused, merit);
  const std::size_t pairs = report.nominal.pairs.size();

  std::vector<RunResult> results(cfg.runs);
  const auto run = [&](std::size_t i) {
    RunResult& r = results[i];
    try {
      Rng rng = run_stream(cfg, i);
      const PerturbedSystem p = perturb(system, merit, cfg, rng);
      r.clamped = p.clamped;
      for (const auto& pair : score(p.system, merit).pairs) r.mtf50.push_back(pair.mtf50);
      if (r.mtf50.size() != pairs) throw TooFewRays("pair count changed");
    } catch (const Error&) {
      r.failed = true;
      r.mtf50.assign(pairs, 0.0);
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(1, cfg.workers), cfg.runs);
  if (workers == 1) {
    for (std::size_t i = 0; i < cfg.runs; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cfg.runs; i = next++) run(i);
      });
  }

  for (const auto& r : results) {
    report.failed += r.failed;
    report.clamped += r.clamped;
  }
  for (std::size_t k = 0; k < pairs; ++k) {
    ToleranceEntry e;
    e.emitter = report.nominal.pairs[k].emitter;
    e.channel = report.nominal.pairs[k].channel;
    e.nominal_mtf50 = report.nominal.pairs[k].mtf50;
    std::vector<double> column;
    column.reserve(results.size());
    for (const auto& r : results) column.push_back(r.mtf50[k]);
    e.mtf50 = summarize(std::move(column));
    report.entries.push_back(e);
  }
  if (keep_raw)
    for (auto& r : results) report.raw.push_back(std::move(r.mtf50));
  return report;
}

std::string raw_scores_csv(const ToleranceReport& report) {
  std::string out = "run";
  for (const auto& e : report.entries) out += ",e" + std::to_string(e.emitter) + "c" + std::to_string(e.channel);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < report.raw.size(); ++i) {
    out += std::to_string(i);
    for (double v : report.raw[i]) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace lf
