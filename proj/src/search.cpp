#include "lensfactory/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "lensfactory/error.hpp"
#include "lensfactory/rng.hpp"

namespace lf {

namespace {

// Substream purposes.
constexpr std::uint64_t kParent = 1, kTarget = 2, kPair = 3, kSwap = 4, kRandom = 5, kSample = 6;

std::vector<ElementInstance> instances(std::span<const ElementPtr> elements, bool flips) {
  std::vector<ElementInstance> out;
  for (const auto& e : elements) {
    out.push_back(make_instance(e, false));
    if (flips && !e->flip_symmetric()) out.push_back(make_instance(e, true));
  }
  return out;
}

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

bool within(double value, double center, double tol) { return std::abs(value - center) <= tol * center; }

}  // namespace

// --- Layouts -----------------------------------------------------------------------

LensSystem assemble(const LensLayout& layout, const DesignSpec& spec) {
  const std::size_t k = layout.lenses.size();
  if (k == 0 || layout.stop_position > k || layout.spacings.size() + 1 != k)
    throw ValidationError("inconsistent lens layout");
  LensSystem s;
  for (std::size_t i = 0; i <= k; ++i) {
    const bool stop_here = i == layout.stop_position;
    if (stop_here) {
      if (i > 0) s.gaps.push_back(i == k ? layout.end_gap : layout.spacings[i - 1] / 2);
      s.components.emplace_back(Stop{1.0});
    }
    if (i == k) break;
    if (i == 0 && stop_here) s.gaps.push_back(layout.end_gap);
    if (i > 0) s.gaps.push_back(stop_here ? layout.spacings[i - 1] / 2 : layout.spacings[i - 1]);
    s.components.emplace_back(layout.lenses[i]);
  }
  spec.apply_to(s);
  const double object = spec.at_infinity() ? 0.0 : spec.object_distance;
  s.sensor_gap = paraxial_image_distance(s, object).value_or(0.0);
  return s;
}

LensLayout layout_of(const LensSystem& system) {
  LensLayout l;
  double pending = 0;
  bool after_lens = false;
  for (std::size_t i = 0; i < system.components.size(); ++i) {
    const double gap_after = i < system.gaps.size() ? system.gaps[i] : 0.0;
    if (const auto* e = std::get_if<ElementInstance>(&system.components[i])) {
      if (after_lens) l.spacings.push_back(pending);
      l.lenses.push_back(*e);
      after_lens = true;
      pending = gap_after;
    } else {
      if (std::holds_alternative<Stop>(system.components[i])) {
        l.stop_position = l.lenses.size();
        if (i == 0) l.end_gap = gap_after;
        if (i + 1 == system.components.size() && i > 0) l.end_gap = system.gaps[i - 1];
      }
      pending += gap_after;
    }
  }
  return l;
}

std::string candidate_key(const LensSystem& system) {
  std::string key;
  for (const auto& c : system.components) {
    if (!key.empty()) key += ',';
    if (const auto* e = std::get_if<ElementInstance>(&c)) {
      key += e->element->stock_id;
      if (e->flipped) key += '~';
    } else if (std::holds_alternative<Stop>(c)) {
      key += '|';
    } else {
      key += "ideal:" + hex(std::get<IdealLens>(c).focal_length);
    }
  }
  return key;
}

std::vector<std::string> stock_sequence(const LensSystem& system) {
  std::vector<std::string> out;
  for (const auto& c : system.components)
    if (const auto* e = std::get_if<ElementInstance>(&c)) out.push_back(e->element->stock_id);
  return out;
}

// --- Seeds -----------------------------------------------------------------------------

std::string_view to_string(SeedName name) {
  switch (name) {
    case SeedName::Singlet: return "singlet";
    case SeedName::Triplet: return "triplet";
    case SeedName::DoubleGauss: return "double_gauss";
  }
  return "triplet";
}

std::optional<SeedName> parse_seed_name(std::string_view text) {
  for (auto n : {SeedName::Singlet, SeedName::Triplet, SeedName::DoubleGauss})
    if (text == to_string(n)) return n;
  return std::nullopt;
}

SeedForm seed_preset(SeedName name, const DesignSpec& spec) {
  const double phi = 1000.0 / spec.target_efl();
  const double diameter = std::max(2.0 * spec.target_efl() / spec.f_number, 0.6 * spec.sensor.diagonal());
  const auto slot = [&](double factor) {
    return SeedSlot{factor > 0 ? PowerSign::Positive : PowerSign::Negative, std::abs(factor) * phi, diameter};
  };
  SeedForm f;
  f.name = name;
  switch (name) {
    case SeedName::Singlet:
      f.slots = {slot(1)};
      f.stop_positions = {0, 1};
      break;
    case SeedName::Triplet:
      f.slots = {slot(1.5), slot(-2), slot(1.5)};
      f.stop_positions = {1, 2};
      break;
    case SeedName::DoubleGauss:
      f.slots = {slot(1), slot(1), slot(-1.5), slot(-1.5), slot(1), slot(1)};
      f.stop_positions = {3};
      break;
  }
  return f;
}

SeedEnumerator::SeedEnumerator(const Catalog& catalog, const DesignSpec& spec, SeedForm form,
                               EnumerationOptions options)
    : spec_(spec), form_(std::move(form)) {
  for (const auto& s : form_.slots) {
    const std::vector<ElementPtr> admitted =
        options.tolerance >= 1
            ? std::vector<ElementPtr>(catalog.subset(s.sign).begin(), catalog.subset(s.sign).end())
            : catalog.query(s.base_power, options.tolerance, s.base_diameter, options.tolerance, s.sign);
    element_counts_.push_back(admitted.size());
    choices_.push_back(instances(admitted, options.flips));
  }
  reset();
}

std::uint64_t enumeration_count(std::span<const std::uint64_t> slot_counts, std::uint64_t stop_positions) {
  std::uint64_t n = stop_positions;
  for (auto c : slot_counts) n *= c;
  return n;
}

std::uint64_t SeedEnumerator::count() const {
  std::vector<std::uint64_t> sizes;
  for (const auto& c : choices_) sizes.push_back(c.size());
  return enumeration_count(sizes, form_.stop_positions.size());
}

void SeedEnumerator::reset() {
  odometer_.assign(choices_.size(), 0);
  stop_ = 0;
  done_ = count() == 0;
}

std::optional<LensSystem> SeedEnumerator::next() {
  if (done_) return std::nullopt;
  LensLayout layout;
  for (std::size_t i = 0; i < choices_.size(); ++i) layout.lenses.push_back(choices_[i][odometer_[i]]);
  layout.spacings.assign(layout.lenses.size() - 1, form_.initial_gap);
  layout.end_gap = form_.initial_gap / 2;
  layout.stop_position = form_.stop_positions[stop_];
  LensSystem out = assemble(layout, spec_);

  if (++stop_ == form_.stop_positions.size()) {
    stop_ = 0;
    std::size_t i = choices_.size();
    for (;;) {
      if (i == 0) {
        done_ = true;
        break;
      }
      --i;
      if (++odometer_[i] < choices_[i].size()) break;
      odometer_[i] = 0;
    }
  }
  return out;
}

// --- Pruning -------------------------------------------------------------------------

std::string_view to_string(PruneTest test) {
  switch (test) {
    case PruneTest::None: return "none";
    case PruneTest::Basic: return "basic";
    case PruneTest::Focus: return "focus";
    case PruneTest::FNumber: return "f_number";
    case PruneTest::Fov: return "fov";
    case PruneTest::Vignetting: return "vignetting";
  }
  return "none";
}

namespace {

PruneResult fail(PruneResult r, PruneTest test, std::string reason) {
  r.passed = false;
  r.failed = test;
  r.reason = std::move(reason);
  return r;
}

PruneResult field_tests(PruneResult r, const DesignSpec& spec, const PupilGrid& pupil) {
  const double gap = r.system.sensor_gap;
  if (gap < spec.flange_min || gap > spec.flange_max)
    return fail(std::move(r), PruneTest::Focus, "back focus outside the flange range");
  try {
    const double fov = system_fov(r.system, FovAxis::Diagonal);
    if (!within(fov, spec.fov, spec.fov_tolerance))
      return fail(std::move(r), PruneTest::Fov, "field of view " + std::to_string(fov) + " deg");
  } catch (const Error& e) {
    return fail(std::move(r), PruneTest::Fov, e.what());
  }
  try {
    const double fractions[] = {0.0, 1.0};
    const auto ri = relative_illumination(r.system, relative_fields(spec.fov / 2, fractions), pupil);
    if (!(ri.back() >= spec.vignetting_threshold))
      return fail(std::move(r), PruneTest::Vignetting, "relative illumination " + std::to_string(ri.back()));
  } catch (const Error& e) {
    return fail(std::move(r), PruneTest::Vignetting, e.what());
  }
  r.passed = true;
  r.failed = PruneTest::None;
  r.reason.clear();
  return r;
}

}  // namespace

PruneResult prune(const LensSystem& system, const DesignSpec& spec, const PupilGrid& pupil) {
  PruneResult r;
  r.system = system;
  if (system.total_cost() > spec.max_cost) return fail(std::move(r), PruneTest::Basic, "cost over budget");
  if (system.lens_count() > static_cast<std::size_t>(spec.max_elements))
    return fail(std::move(r), PruneTest::Basic, "too many elements");
  if (system.length() > spec.max_length) return fail(std::move(r), PruneTest::Basic, "too long");
  try {
    spec.apply_to(r.system);
    r.system.sensor_gap = init_sensor(r.system);
  } catch (const Error& e) {
    return fail(std::move(r), PruneTest::Focus, e.what());
  }
  try {
    r.system = set_fnumber(r.system, spec.f_number);
  } catch (const Error& e) {
    return fail(std::move(r), PruneTest::FNumber, e.what());
  }
  return field_tests(std::move(r), spec, pupil);
}

PruneResult recheck(const LensSystem& system, const DesignSpec& spec, const PupilGrid& pupil) {
  PruneResult r;
  r.system = system;
  return field_tests(std::move(r), spec, pupil);
}

// --- Splitting ---------------------------------------------------------------------------

std::vector<ElementPair> split_pairs(const LensElement& element, const Catalog& catalog, const SplitConfig& cfg) {
  const double p0 = std::abs(element.power());
  const double lo = (1 - cfg.alpha) * p0 / 2, hi = (1 + cfg.alpha) * p0 / 2;
  const double c0 = element.max_curvature();
  std::vector<ElementPtr> admitted;
  for (const auto& e : catalog.subset(element.positive() ? PowerSign::Positive : PowerSign::Negative)) {
    const double p = std::abs(e->power());
    if (!(p > lo && p < hi)) continue;
    if (!within(e->diameter, element.diameter, cfg.diameter_tol)) continue;
    if (cfg.curvature_rule && e->max_curvature() > c0) continue;
    admitted.push_back(e);
  }
  const auto inst = instances(admitted, cfg.flips);
  std::vector<ElementPair> out;
  out.reserve(inst.size() * inst.size());
  for (const auto& a : inst)
    for (const auto& b : inst) out.emplace_back(a, b);
  return out;
}

std::vector<LensSystem> split_with(const LensLayout& layout, std::size_t lens_index, const ElementPair& pair,
                                   const SplitConfig& cfg, const DesignSpec& spec) {
  if (lens_index >= layout.lenses.size()) throw std::out_of_range("split target is not a lens");
  LensLayout l = layout;
  l.lenses[lens_index] = pair.first;
  l.lenses.insert(l.lenses.begin() + static_cast<long>(lens_index) + 1, pair.second);
  l.spacings.insert(l.spacings.begin() + static_cast<long>(lens_index), cfg.pair_gap);
  std::vector<LensSystem> out;
  for (std::size_t p = 0; p <= l.lenses.size(); ++p) {
    l.stop_position = p;
    out.push_back(assemble(l, spec));
  }
  return out;
}

std::vector<LensSystem> split_element(const LensSystem& system, std::size_t lens_index, const Catalog& catalog,
                                      const SplitConfig& cfg, const DesignSpec& spec) {
  const LensLayout layout = layout_of(system);
  if (lens_index >= layout.lenses.size()) throw std::out_of_range("split target is not a lens");
  std::vector<LensSystem> out;
  for (const auto& pair : split_pairs(*layout.lenses[lens_index].element, catalog, cfg)) {
    auto more = split_with(layout, lens_index, pair, cfg, spec);
    std::move(more.begin(), more.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<std::size_t> rank_split_targets(std::span<const ElementInstance> lenses) {
  std::vector<std::size_t> idx(lenses.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = *lenses[a].element;
    const auto& eb = *lenses[b].element;
    const double pa = std::abs(ea.power()), pb = std::abs(eb.power());
    if (pa != pb) return pa > pb;
    const double ca = ea.max_curvature(), cb = eb.max_curvature();
    if (ca != cb) return ca > cb;
    return a < b;
  });
  return idx;
}

std::vector<std::size_t> rank_split_targets(const LensSystem& system) {
  return rank_split_targets(layout_of(system).lenses);
}

// --- Candidates ---------------------------------------------------------------------------

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score() != b.score()) return a.score() > b.score();
  if (a.stock_ids != b.stock_ids) return a.stock_ids < b.stock_ids;
  return a.key < b.key;
}

void CandidatePool::merge(std::vector<Candidate> more, std::size_t n) {
  for (auto& c : more) candidates.push_back(std::move(c));
  std::stable_sort(candidates.begin(), candidates.end(), ranks_before);
  std::unordered_set<std::string> seen;
  std::vector<Candidate> kept;
  for (auto& c : candidates) {
    if (kept.size() == n) break;
    if (seen.insert(c.key).second) kept.push_back(std::move(c));
  }
  candidates = std::move(kept);
}

CandidateEvaluator::CandidateEvaluator(DesignSpec spec, EvaluationOptions options)
    : spec_(std::move(spec)), options_(std::move(options)) {
  MeritConfig& m = options_.optimizer.merit;
  if (m.fields.emitters.empty()) {
    m.fields = spec_.merit().fields;
    m.pixel_pitch_um = spec_.pixel_pitch_um;
    m.mode = spec_.stage1_mode;
  }
  options_.optimizer.on_step = nullptr;
}

PruneResult CandidateEvaluator::prune(const LensSystem& system) const {
  return lf::prune(system, spec_, options_.prune_pupil);
}

std::optional<Candidate> CandidateEvaluator::optimize(const LensSystem& pruned) const {
  if (options_.cancel && options_.cancel->load()) return std::nullopt;
  std::string memo_key = candidate_key(pruned) + "@" + hex(pruned.stop().aperture_radius);
  for (double g : pruned.gaps) memo_key += "," + hex(g);
  {
    const std::lock_guard lock(mutex_);
    if (auto it = memo_.find(memo_key); it != memo_.end()) return it->second;
  }

  std::optional<Candidate> result;
  try {
    std::vector<TraceRecord> trace;
    OptOptions traced;
    if (options_.keep_trace) {
      traced = options_.optimizer;
      traced.on_step = [&](const TraceRecord& r) { trace.push_back(r); };
    }
    const OptOptions& o = options_.keep_trace ? traced : options_.optimizer;
    const OptState st = options_.two_stage ? optimize_two_stage(pruned, o) : optimize_gaps(pruned, o, o.merit.mode);
    LensSystem sys = st.apply(pruned);
    if (recheck(sys, spec_, options_.prune_pupil).passed) {
      const ExitRayCache cache(sys, o.merit, true);
      Candidate c;
      c.report = evaluate_report(cache, o.merit, sys.sensor_gap, sys.sensor_tilt(), true);
      c.key = candidate_key(sys);
      c.stock_ids = stock_sequence(sys);
      c.start_gaps = pruned.gaps;
      c.trace = std::move(trace);
      c.system = std::move(sys);
      result = std::move(c);
    }
  } catch (const Error&) {
    result.reset();
  }

  const std::lock_guard lock(mutex_);
  ++misses_;
  memo_.emplace(memo_key, result);
  return result;
}

std::vector<std::optional<Candidate>> CandidateEvaluator::optimize_all(std::span<const LensSystem> pruned) const {
  std::vector<std::optional<Candidate>> out(pruned.size());
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(1, options_.workers), pruned.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < pruned.size(); ++i) out[i] = optimize(pruned[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < pruned.size(); i = next++) out[i] = optimize(pruned[i]);
    });
  pool.clear();
  return out;
}

std::size_t CandidateEvaluator::optimizations() const {
  const std::lock_guard lock(mutex_);
  return misses_;
}

// --- Evolution ------------------------------------------------------------------------------

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::Greedy: return "greedy";
    case Strategy::Pool: return "pool";
    case Strategy::PoolSwap: return "pool_swap";
  }
  return "pool_swap";
}

std::optional<Strategy> parse_strategy(std::string_view text) {
  for (auto s : {Strategy::Random, Strategy::Greedy, Strategy::Pool, Strategy::PoolSwap})
    if (text == to_string(s)) return s;
  return std::nullopt;
}

void EvolutionConfig::validate() const {
  if (pool_size < 1) throw ValidationError("pool size must be >= 1");
  if (budget < pool_size) throw ValidationError("budget must be >= pool size");
  if (!(split.alpha > 0 && split.alpha < 1)) throw ValidationError("alpha must be in (0, 1)");
  if (!(split.diameter_tol >= 0)) throw ValidationError("diameter tolerance must be >= 0");
  if (seed_elements < 1) throw ValidationError("seed element count must be >= 1");
}

namespace {

Rng stream(const EvolutionConfig& cfg, int iteration, std::size_t draw, std::uint64_t purpose) {
  return Rng(substream_seed(cfg.seed, {static_cast<std::uint64_t>(iteration), draw, purpose}));
}

class Proposer {
 public:
  Proposer(const CandidatePool& pool, const Catalog& catalog, const DesignSpec& spec, const EvolutionConfig& cfg,
           int iteration)
      : pool_(pool), catalog_(catalog), spec_(spec), cfg_(cfg), iteration_(iteration) {}

  std::vector<LensSystem> draw(std::size_t d) {
    if (cfg_.strategy == Strategy::Random) return {random_system(d)};
    LensLayout parent = choose_parent(d);
    if (parent.lenses.size() >= static_cast<std::size_t>(spec_.max_elements)) return {};

    // Pairs are drawn without replacement per parent; a target is used until its pairs run
    // out, then the next one in rank order.
    std::string parent_key;
    for (const auto& e : parent.lenses) parent_key += e.element->stock_id + (e.flipped ? "~," : ",");
    auto& remaining = remaining_[parent_key];
    std::vector<std::size_t> targets;
    for (std::size_t i : rank_split_targets(parent.lenses)) {
      const auto& pairs = pairs_for(*parent.lenses[i].element);
      if (pairs.empty()) continue;
      auto [it, fresh] = remaining.try_emplace(i);
      if (fresh) {
        it->second.resize(pairs.size());
        std::iota(it->second.begin(), it->second.end(), std::size_t{0});
      }
      if (!it->second.empty()) targets.push_back(i);
    }
    if (targets.empty()) return {};
    std::size_t target = targets.front();
    if (!cfg_.split.power_ranked) {
      Rng r = stream(cfg_, iteration_, d, kTarget);
      target = targets[r.below(targets.size())];
    }
    auto& left = remaining[target];
    Rng r = stream(cfg_, iteration_, d, kPair);
    const std::size_t j = r.below(left.size());
    const std::size_t pair = left[j];
    left[j] = left.back();
    left.pop_back();
    return split_with(parent, target, pairs_for(*parent.lenses[target].element)[pair], cfg_.split, spec_);
  }

 private:
  LensLayout choose_parent(std::size_t d) {
    const auto& c = pool_.candidates;
    if (cfg_.strategy == Strategy::Greedy) return layout_of(c.front().system);
    Rng r = stream(cfg_, iteration_, d, kParent);
    LensLayout base = layout_of(c[r.below(c.size())].system);
    if (cfg_.strategy == Strategy::Pool) return base;

    // Slot-wise swap among candidates with the same lens count and slot sign.
    Rng s = stream(cfg_, iteration_, d, kSwap);
    std::vector<LensLayout> donors;
    for (const auto& cand : c) {
      LensLayout l = layout_of(cand.system);
      if (l.lenses.size() == base.lenses.size()) donors.push_back(std::move(l));
    }
    for (std::size_t i = 0; i < base.lenses.size(); ++i) {
      std::vector<const ElementInstance*> slot;
      for (const auto& l : donors)
        if (l.lenses[i].element->positive() == base.lenses[i].element->positive()) slot.push_back(&l.lenses[i]);
      base.lenses[i] = *slot[s.below(slot.size())];
    }
    return base;
  }

  LensSystem random_system(std::size_t d) {
    Rng r = stream(cfg_, iteration_, d, kRandom);
    const std::size_t k =
        std::min<std::size_t>(cfg_.seed_elements + static_cast<std::size_t>(iteration_), spec_.max_elements);
    LensLayout l;
    const auto all = catalog_.elements();
    for (std::size_t i = 0; i < k; ++i) {
      const ElementPtr& e = all[r.below(all.size())];
      const bool flip = cfg_.split.flips && r.uniform() < 0.5;
      l.lenses.push_back(make_instance(e, flip));
    }
    l.spacings.assign(k - 1, 2.0);
    l.stop_position = r.below(k + 1);
    return assemble(l, spec_);
  }

  const std::vector<ElementPair>& pairs_for(const LensElement& e) {
    auto it = pairs_.find(e.stock_id);
    if (it == pairs_.end()) it = pairs_.emplace(e.stock_id, split_pairs(e, catalog_, cfg_.split)).first;
    return it->second;
  }

  const CandidatePool& pool_;
  const Catalog& catalog_;
  const DesignSpec& spec_;
  const EvolutionConfig& cfg_;
  int iteration_;
  std::map<std::string, std::vector<ElementPair>> pairs_;
  std::map<std::string, std::map<std::size_t, std::vector<std::size_t>>> remaining_;
};

CandidatePool finish(CandidatePool pool, std::vector<std::optional<Candidate>> results, int iteration,
                     const EvolutionConfig& cfg, EvolutionStats* stats) {
  std::vector<Candidate> children;
  for (auto& r : results)
    if (r) {
      r->iteration = iteration;
      children.push_back(std::move(*r));
    }
  if (stats) stats->feasible = children.size();
  pool.iteration = iteration;
  pool.stagnant = children.empty();
  pool.merge(std::move(children), cfg.pool_size);
  return pool;
}

}  // namespace

CandidatePool seed_pool(const Catalog& catalog, const CandidateEvaluator& evaluator, const SeedForm& form,
                        const EvolutionConfig& cfg, EvolutionStats* stats) {
  cfg.validate();
  EvolutionStats st;
  SeedEnumerator en(catalog, evaluator.spec(), form, cfg.enumeration);
  // Reservoir sample of the survivors, kept in stream order.
  std::vector<std::pair<std::uint64_t, LensSystem>> sample;
  Rng r = stream(cfg, 0, 0, kSample);
  std::uint64_t seen = 0;
  while (auto s = en.next()) {
    ++st.proposals;
    PruneResult p = evaluator.prune(*s);
    if (!p.passed) {
      ++st.pruned;
      continue;
    }
    if (sample.size() < cfg.budget) {
      sample.emplace_back(seen, std::move(p.system));
    } else {
      const std::uint64_t j = r.below(seen + 1);
      if (j < cfg.budget) sample[j] = {seen, std::move(p.system)};
    }
    ++seen;
  }
  std::sort(sample.begin(), sample.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<LensSystem> systems;
  for (auto& s : sample) systems.push_back(std::move(s.second));
  st.optimized = systems.size();
  auto results = evaluator.optimize_all(systems);
  CandidatePool out = finish({}, std::move(results), 0, cfg, &st);
  if (stats) *stats = st;
  return out;
}

CandidatePool evolve(const CandidatePool& pool, const Catalog& catalog, const CandidateEvaluator& evaluator,
                     const EvolutionConfig& cfg, EvolutionStats* stats) {
  cfg.validate();
  if (pool.empty() && cfg.strategy != Strategy::Random)
    throw ValidationError("evolution needs a non-empty pool");
  const int iteration = pool.iteration + 1;
  const std::size_t max_draws = cfg.max_draws ? cfg.max_draws : 20 * cfg.budget;

  EvolutionStats st;
  Proposer proposer(pool, catalog, evaluator.spec(), cfg, iteration);
  std::unordered_set<std::string> seen;
  for (const auto& c : pool.candidates) seen.insert(c.key);
  std::vector<LensSystem> survivors;
  while (survivors.size() < cfg.budget && st.draws < max_draws) {
    const std::size_t d = st.draws++;
    for (auto& s : proposer.draw(d)) {
      if (!seen.insert(candidate_key(s)).second) continue;
      ++st.proposals;
      PruneResult p = evaluator.prune(s);
      if (!p.passed) {
        ++st.pruned;
        continue;
      }
      survivors.push_back(std::move(p.system));
      if (survivors.size() == cfg.budget) break;
    }
  }
  st.optimized = survivors.size();
  auto results = evaluator.optimize_all(survivors);
  CandidatePool out = finish(pool, std::move(results), iteration, cfg, &st);
  if (stats) *stats = st;
  return out;
}

}  // namespace lf
