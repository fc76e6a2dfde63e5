#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "lensfactory/error.hpp"
#include "lensfactory/search.hpp"

namespace lf {
namespace {

using testing::make_singlet;
using testing::synthetic_catalog;

// Equi-convex (or equi-concave) element of focal length f, n = 1.5.
LensElement thin_element(const std::string& id, double f, double diameter = 12.0, double t = 2.0) {
  const double r = f;  // 1/f = (n - 1) * 2 / r for a thin lens
  LensElement e = *make_singlet(r, -r, f > 0 ? t : 1.0, 1.5, 64.17, diameter, id.c_str());
  e.stock_id = id;
  return e;
}

std::set<std::string> keys_of(const std::vector<LensSystem>& systems) {
  std::set<std::string> out;
  for (const auto& s : systems) out.insert(candidate_key(s));
  return out;
}

// --- Layouts -------------------------------------------------------------------------

TEST(Layout, AssembleRoundTrip) {
  Rng rng(11);
  const auto& cat = synthetic_catalog();
  const DesignSpec spec;
  for (int trial = 0; trial < 200; ++trial) {
    LensLayout l;
    const std::size_t k = 1 + rng.below(5);
    for (std::size_t i = 0; i < k; ++i)
      l.lenses.push_back(make_instance(cat.elements()[rng.below(cat.size())], rng.uniform() < 0.5));
    for (std::size_t i = 0; i + 1 < k; ++i) l.spacings.push_back(rng.uniform(0.5, 8.0));
    l.stop_position = rng.below(k + 1);
    l.end_gap = rng.uniform(0.5, 3.0);

    const LensSystem s = assemble(l, spec);
    ASSERT_EQ(s.lens_count(), k);
    ASSERT_EQ(s.gaps.size() + 1, s.components.size());
    const LensLayout back = layout_of(s);
    ASSERT_EQ(back.stop_position, l.stop_position);
    ASSERT_EQ(back.spacings.size(), l.spacings.size());
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(back.lenses[i].element, l.lenses[i].element);
    for (std::size_t i = 0; i + 1 < k; ++i) EXPECT_NEAR(back.spacings[i], l.spacings[i], 1e-12);
    if (l.stop_position == 0 || l.stop_position == k) EXPECT_DOUBLE_EQ(back.end_gap, l.end_gap);
  }
}

TEST(Layout, KeyIgnoresGaps) {
  const auto& cat = synthetic_catalog();
  LensLayout l;
  l.lenses = {make_instance(cat.elements()[0]), make_instance(cat.elements()[1], true)};
  l.spacings = {2.0};
  l.stop_position = 1;
  const DesignSpec spec;
  const std::string a = candidate_key(assemble(l, spec));
  l.spacings = {5.0};
  EXPECT_EQ(candidate_key(assemble(l, spec)), a);
  l.stop_position = 2;
  EXPECT_NE(candidate_key(assemble(l, spec)), a);
  EXPECT_NE(a.find('|'), std::string::npos);
}

// --- Seeds ---------------------------------------------------------------------------

TEST(SeedPreset, TripletIsPositiveNegativePositive) {
  const DesignSpec spec;
  const SeedForm f = seed_preset(SeedName::Triplet, spec);
  ASSERT_EQ(f.slots.size(), 3u);
  EXPECT_EQ(f.slots[0].sign, PowerSign::Positive);
  EXPECT_EQ(f.slots[1].sign, PowerSign::Negative);
  EXPECT_EQ(f.slots[2].sign, PowerSign::Positive);
  EXPECT_EQ(f.stop_positions, (std::vector<std::size_t>{1, 2}));
  // Thin-lens power budget sums to the target power.
  double sum = 0;
  for (const auto& s : f.slots) sum += (s.sign == PowerSign::Positive ? 1 : -1) * s.base_power;
  EXPECT_NEAR(sum, 1000.0 / spec.target_efl(), 1e-9);
}

TEST(SeedPreset, NamesRoundTrip) {
  for (auto n : {SeedName::Singlet, SeedName::Triplet, SeedName::DoubleGauss})
    EXPECT_EQ(parse_seed_name(to_string(n)), n);
  EXPECT_FALSE(parse_seed_name("petzval"));
  EXPECT_EQ(seed_preset(SeedName::DoubleGauss, DesignSpec{}).slots.size(), 6u);
}

// Catalog with exactly 23 / 6 / 43 elements inside the slot windows plus distractors.
struct CountedCatalog {
  Catalog catalog;
  SeedForm form;
};

CountedCatalog counted_catalog() {
  std::vector<LensElement> rows;
  const auto band = [&](const char* prefix, double f0, int n) {
    for (int i = 0; i < n; ++i)
      rows.push_back(thin_element(prefix + std::to_string(i), f0 * (1 + 0.3 * ((i + 0.5) / n - 0.5))));
  };
  band("A", 100, 23);
  band("B", -50, 6);
  band("C", 25, 43);
  band("X", 200, 9);   // too weak for any slot
  band("Y", -150, 4);  // too weak for the negative slot
  CountedCatalog c{Catalog(std::move(rows)), {}};
  c.form.slots = {{PowerSign::Positive, 10, 12}, {PowerSign::Negative, 20, 12}, {PowerSign::Positive, 40, 12}};
  c.form.stop_positions = {1, 2};
  return c;
}

TEST(SeedEnumerator, ProductOfSlotCounts) {
  const auto c = counted_catalog();
  SeedEnumerator en(c.catalog, DesignSpec{}, c.form);
  ASSERT_EQ(std::vector<std::size_t>(en.slot_counts().begin(), en.slot_counts().end()),
            (std::vector<std::size_t>{23, 6, 43}));
  EXPECT_EQ(en.count(), 11868u);

  std::set<std::string> keys;
  std::size_t n = 0;
  while (auto s = en.next()) {
    ++n;
    keys.insert(candidate_key(*s));
  }
  EXPECT_EQ(n, 11868u);
  EXPECT_EQ(keys.size(), 11868u);
  EXPECT_FALSE(en.next());
  en.reset();
  EXPECT_TRUE(en.next());
}

TEST(SeedEnumerator, FlipsMultiplyAsymmetricElements) {
  auto c = counted_catalog();
  SeedEnumerator en(c.catalog, DesignSpec{}, c.form, {0.25, true});
  // Equi-convex elements are flip symmetric, so flips add nothing here.
  EXPECT_EQ(en.count(), 11868u);

  std::vector<LensElement> rows{*make_singlet(60, 0, 3, 1.5, 64.17, 12, "P1"),
                                *make_singlet(-30, 30, 1, 1.5, 64.17, 12, "N1"),
                                *make_singlet(30, -30, 3, 1.5, 64.17, 12, "S1")};
  const Catalog cat(rows);
  SeedForm form;
  form.slots = {{PowerSign::Positive, 1000 / rows[0].focal_length, 12},
                {PowerSign::Negative, -1000 / rows[1].focal_length, 12},
                {PowerSign::Positive, 1000 / rows[2].focal_length, 12}};
  form.stop_positions = {1, 2};
  EXPECT_EQ(SeedEnumerator(cat, DesignSpec{}, form, {0.01, false}).count(), 2u);
  EXPECT_EQ(SeedEnumerator(cat, DesignSpec{}, form, {0.01, true}).count(), 4u);
}

TEST(SeedEnumerator, UnconstrainedCountIsAnalytic) {
  const auto& cat = synthetic_catalog();
  ASSERT_EQ(cat.positive_count(), 770u);
  ASSERT_EQ(cat.negative_count(), 115u);
  const DesignSpec spec;
  SeedEnumerator en(cat, spec, seed_preset(SeedName::Triplet, spec), {1.0, false});
  EXPECT_EQ(en.count(), 136'367'000u);
  const std::uint64_t counts[] = {770, 115, 770};
  EXPECT_EQ(enumeration_count(counts, 2), 136'367'000u);
}

TEST(SeedEnumerator, EmptySlotGivesEmptyStream) {
  auto c = counted_catalog();
  c.form.slots[1].base_power = 500;
  SeedEnumerator en(c.catalog, DesignSpec{}, c.form);
  EXPECT_EQ(en.slot_counts()[1], 0u);
  EXPECT_EQ(en.count(), 0u);
  EXPECT_FALSE(en.next());
}

// --- Pruning ---------------------------------------------------------------------------

LensSystem seed_triplet() {
  const auto c = counted_catalog();
  SeedEnumerator en(c.catalog, DesignSpec{}, c.form);
  return *en.next();
}

TEST(Prune, CostOverBudgetFailsBasic) {
  DesignSpec spec;
  spec.max_cost = 1;
  const auto r = prune(seed_triplet(), spec);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.failed, PruneTest::Basic);
}

TEST(Prune, TooManyElementsFailsBasic) {
  DesignSpec spec;
  spec.max_elements = 2;
  EXPECT_EQ(prune(seed_triplet(), spec).failed, PruneTest::Basic);
}

TEST(Prune, AllNegativeFailsFocus) {
  LensLayout l;
  const Catalog cat({thin_element("N1", -40), thin_element("N2", -60)});
  l.lenses = {make_instance(cat.elements()[0]), make_instance(cat.elements()[1])};
  l.spacings = {2};
  l.stop_position = 1;
  const auto r = prune(assemble(l, DesignSpec{}), DesignSpec{});
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.failed, PruneTest::Focus);
  EXPECT_EQ(to_string(r.failed), "focus");
}

TEST(Prune, WrongFocalLengthFailsFov) {
  // A 100 mm singlet on micro 4/3 covers about 12 degrees, far from 40.
  const Catalog cat({thin_element("P", 100, 25)});
  LensLayout l;
  l.lenses = {make_instance(cat.elements()[0])};
  l.stop_position = 0;
  const auto r = prune(assemble(l, DesignSpec{}), DesignSpec{});
  EXPECT_EQ(r.failed, PruneTest::Fov);
}

TEST(Prune, PassingSystemIsFocusedAndStopped) {
  DesignSpec spec;
  const Catalog cat({thin_element("P", spec.target_efl(), 25)});
  LensLayout l;
  l.lenses = {make_instance(cat.elements()[0])};
  l.stop_position = 0;
  l.end_gap = 0.5;
  const auto r = prune(assemble(l, spec), spec);
  ASSERT_TRUE(r.passed) << r.reason;
  const auto px = paraxial_trace(r.system);
  EXPECT_NEAR(px.efl / px.entrance_pupil_diameter, spec.f_number, 1e-3 * spec.f_number);
  EXPECT_NEAR(r.system.sensor_gap, init_sensor(r.system), 1e-9);
}

TEST(Prune, RejectsMostOfTheSeedEnumeration) {
  const auto& cat = synthetic_catalog();
  DesignSpec spec;
  spec.sensor = SensorFormat::micro_four_thirds();
  SeedEnumerator en(cat, spec, seed_preset(SeedName::Triplet, spec));
  std::size_t total = 0, rejected = 0;
  while (auto s = en.next()) {
    ++total;
    if (!prune(*s, spec).passed) ++rejected;
  }
  ASSERT_GT(total, 1000u);
  EXPECT_GE(static_cast<double>(rejected) / static_cast<double>(total), 0.85)
      << rejected << " of " << total;
}

// --- Splitting ---------------------------------------------------------------------------

TEST(SplitPairs, PowerWindowIsExclusive) {
  // 20 diopter target: partners must lie strictly in (7.5, 12.5) diopters.
  std::vector<LensElement> rows{thin_element("T", 50, 12)};
  for (double p : {7.4, 7.6, 10.0, 12.4, 12.6}) rows.push_back(thin_element("P" + std::to_string(p), 1000 / p, 12));
  rows.push_back(thin_element("NEG", -100, 12));
  const Catalog cat(rows);
  const auto pairs = split_pairs(*cat.find("T"), cat, SplitConfig{});
  std::set<std::string> ids;
  for (const auto& [a, b] : pairs) {
    ids.insert(a.element->stock_id);
    ids.insert(b.element->stock_id);
    EXPECT_TRUE(a.element->positive() && b.element->positive());
  }
  EXPECT_EQ(ids, (std::set<std::string>{"P7.600000", "P10.000000", "P12.400000"}));
  // Ordered pairs, repeats allowed, no flips for symmetric elements.
  EXPECT_EQ(pairs.size(), 9u);
}

TEST(SplitPairs, DiameterAndCurvatureRules) {
  std::vector<LensElement> rows{thin_element("T", 50, 12), thin_element("OK", 100, 12),
                                thin_element("WIDE", 100, 16), thin_element("NARROW", 100, 8.9),
                                *make_singlet(20, 100.0 / 3, 2, 1.5, 64.17, 12, "STEEP")};
  const Catalog cat(rows);
  ASSERT_GT(cat.find("STEEP")->max_curvature(), cat.find("T")->max_curvature());
  ASSERT_NEAR(cat.find("STEEP")->power(), 10, 1);
  SplitConfig cfg;
  std::set<std::string> ids;
  for (const auto& [a, b] : split_pairs(*cat.find("T"), cat, cfg)) ids.insert(a.element->stock_id);
  EXPECT_EQ(ids, (std::set<std::string>{"OK"}));
}

TEST(SplitPairs, NegativeTargetTakesNegativePartners) {
  const Catalog cat({thin_element("T", -40, 12), thin_element("N", -80, 12), thin_element("P", 80, 12)});
  for (const auto& [a, b] : split_pairs(*cat.find("T"), cat, SplitConfig{})) {
    EXPECT_EQ(a.element->stock_id, "N");
    EXPECT_EQ(b.element->stock_id, "N");
  }
}

// Rules 2-5 written out from scratch.
bool admissible(const LensElement& target, const LensElement& part, double alpha, double dtol) {
  const double p0 = 1000.0 / std::abs(target.focal_length);
  const double p = 1000.0 / std::abs(part.focal_length);
  const bool same_sign = (target.focal_length > 0) == (part.focal_length > 0);
  const bool power_ok = (1 - alpha) * p0 / 2 < p && p < (1 + alpha) * p0 / 2;
  const bool diameter_ok = std::abs(part.diameter - target.diameter) <= dtol * target.diameter;
  const auto curv = [](const LensElement& e) {
    double c = 0;
    for (double r : e.radii)
      if (r != 0) c = std::max(c, 1 / std::abs(r));
    return c;
  };
  return same_sign && power_ok && diameter_ok && curv(part) <= curv(target);
}

TEST(SplitElement, MatchesBruteForceFilterOnToyCatalog) {
  const Catalog cat = generate_synthetic_catalog(5, SyntheticCounts::with_totals(40, 10));
  ASSERT_EQ(cat.size(), 50u);
  const DesignSpec spec;
  const SplitConfig cfg;
  std::size_t nonempty = 0;
  for (const auto& target : cat.elements()) {
    for (const auto& other : {cat.elements()[0], cat.elements()[45]}) {
      LensLayout l;
      l.lenses = {make_instance(other), make_instance(target)};
      l.spacings = {3.0};
      l.stop_position = 1;
      const LensSystem parent = assemble(l, spec);

      std::set<std::string> expected;
      std::vector<ElementInstance> parts;
      for (const auto& e : cat.elements()) {
        if (!admissible(*target, *e, cfg.alpha, cfg.diameter_tol)) continue;
        parts.push_back(make_instance(e, false));
        if (!e->flip_symmetric()) parts.push_back(make_instance(e, true));
      }
      for (const auto& a : parts)
        for (const auto& b : parts)
          for (std::size_t stop = 0; stop <= 3; ++stop) {
            LensLayout c;
            c.lenses = {l.lenses[0], a, b};
            c.spacings = {3.0, 1.0};
            c.stop_position = stop;
            expected.insert(candidate_key(assemble(c, spec)));
          }
      const auto got = split_element(parent, 1, cat, cfg, spec);
      EXPECT_EQ(keys_of(got), expected) << target->stock_id;
      EXPECT_EQ(got.size(), expected.size());
      if (!expected.empty()) ++nonempty;
    }
  }
  EXPECT_GT(nonempty, 10u);
}

TEST(SplitElement, RandomOutputsSatisfyRules) {
  const auto& cat = synthetic_catalog();
  const DesignSpec spec;
  const SplitConfig cfg;
  Rng rng(2024);
  int checked = 0, attempts = 0;
  while (checked < 10000 && attempts < 200000) {
    ++attempts;
    const auto& target = cat.elements()[rng.below(cat.size())];
    const auto pairs = split_pairs(*target, cat, cfg);
    if (pairs.empty()) continue;
    LensLayout l;
    l.lenses = {make_instance(cat.elements()[rng.below(cat.size())]), make_instance(target)};
    l.spacings = {rng.uniform(1, 5)};
    l.stop_position = rng.below(3);
    for (int k = 0; k < 50 && checked < 10000; ++k) {
      const auto& pair = pairs[rng.below(pairs.size())];
      const auto out = split_with(l, 1, pair, cfg, spec);
      ASSERT_EQ(out.size(), 4u);
      for (const auto& s : out) {
        const LensLayout c = layout_of(s);
        ASSERT_EQ(c.lenses.size(), 3u);
        EXPECT_EQ(c.lenses[0].element, l.lenses[0].element);
        EXPECT_TRUE(admissible(*target, *c.lenses[1].element, cfg.alpha, cfg.diameter_tol));
        EXPECT_TRUE(admissible(*target, *c.lenses[2].element, cfg.alpha, cfg.diameter_tol));
        EXPECT_NEAR(c.spacings[1], cfg.pair_gap, 1e-12);
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 10000);
}

TEST(SplitElement, BadIndexThrows) {
  const LensSystem s = seed_triplet();
  EXPECT_THROW(split_element(s, 3, synthetic_catalog(), SplitConfig{}, DesignSpec{}), std::out_of_range);
}

TEST(RankSplitTargets, ByPowerThenCurvature) {
  LensElement d = *make_singlet(50, -50, 2, 1.5, 64.17, 12, "D");
  LensElement e = *make_singlet(25, 0, 2, 1.5, 64.17, 12, "E");
  d.focal_length = e.focal_length = 50;
  const Catalog cat({thin_element("A", 1000.0 / 30), thin_element("B", -1000.0 / 12), thin_element("C", 1000.0 / 18),
                     d, e});
  const std::vector<ElementInstance> three{make_instance(cat.find("A")), make_instance(cat.find("B")),
                                           make_instance(cat.find("C"))};
  EXPECT_EQ(rank_split_targets(three), (std::vector<std::size_t>{0, 2, 1}));

  // D and E have the same power; E is more strongly curved.
  ASSERT_NEAR(cat.find("D")->power(), cat.find("E")->power(), 1e-9);
  const std::vector<ElementInstance> two{make_instance(cat.find("D")), make_instance(cat.find("E"))};
  EXPECT_EQ(rank_split_targets(two), (std::vector<std::size_t>{1, 0}));

  const std::vector<ElementInstance> one{make_instance(cat.find("D"))};
  EXPECT_EQ(rank_split_targets(one), (std::vector<std::size_t>{0}));
}

// --- Pools ---------------------------------------------------------------------------------

Candidate fake(const std::string& key, double score, std::vector<std::string> ids) {
  Candidate c;
  c.key = key;
  c.report.mtf_area = score;
  c.stock_ids = std::move(ids);
  return c;
}

TEST(CandidatePool, MergeSortsDedupesAndTruncates) {
  CandidatePool p;
  p.merge({fake("a", 0.2, {"A"}), fake("b", 0.5, {"B"}), fake("c", 0.2, {"0"})}, 10);
  p.merge({fake("b", 0.1, {"B"}), fake("d", 0.9, {"D"})}, 3);
  ASSERT_EQ(p.candidates.size(), 3u);
  EXPECT_EQ(p.candidates[0].key, "d");
  EXPECT_EQ(p.candidates[1].key, "b");
  EXPECT_EQ(p.candidates[1].score(), 0.5);
  EXPECT_EQ(p.candidates[2].key, "c");  // tie broken by stock ids
}

// --- Evolution -------------------------------------------------------------------------------

const Catalog& toy_catalog() {
  static const Catalog c = generate_synthetic_catalog(3, SyntheticCounts::with_totals(120, 30));
  return c;
}

EvaluationOptions cheap_evaluation() {
  EvaluationOptions o;
  o.two_stage = false;
  o.optimizer.merit.wavelengths = ChannelWavelengths::single_line(kLambdaD);
  o.optimizer.merit.pupil = {3, 6};
  o.optimizer.merit.psf_grid = 32;
  o.optimizer.max_iterations = 10;
  return o;
}

EvolutionConfig small_config(Strategy s, std::size_t n, std::uint64_t seed = 1) {
  EvolutionConfig c;
  c.strategy = s;
  c.pool_size = n;
  c.budget = 8;
  c.seed = seed;
  return c;
}

std::vector<std::pair<std::string, double>> summary(const CandidatePool& p) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& c : p.candidates) out.emplace_back(c.key, c.score());
  return out;
}

const CandidatePool& toy_seed_pool() {
  static const CandidatePool p = [] {
    const DesignSpec spec;
    CandidateEvaluator ev(spec, cheap_evaluation());
    EvolutionConfig cfg = small_config(Strategy::Pool, 8);
    cfg.budget = 24;
    return seed_pool(toy_catalog(), ev, seed_preset(SeedName::Triplet, spec), cfg);
  }();
  return p;
}

TEST(Evolution, ConfigValidation) {
  EvolutionConfig c;
  EXPECT_NO_THROW(c.validate());
  c.budget = c.pool_size - 1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.split.alpha = 1;
  EXPECT_THROW(c.validate(), ValidationError);
  for (auto s : {Strategy::Random, Strategy::Greedy, Strategy::Pool, Strategy::PoolSwap})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
}

TEST(Evolution, SeedPoolIsSortedAndFeasible) {
  const auto& p = toy_seed_pool();
  ASSERT_FALSE(p.empty());
  EXPECT_EQ(p.iteration, 0);
  for (std::size_t i = 1; i < p.candidates.size(); ++i)
    EXPECT_FALSE(ranks_before(p.candidates[i], p.candidates[i - 1]));
  const DesignSpec spec;
  for (const auto& c : p.candidates) {
    EXPECT_EQ(c.system.lens_count(), 3u);
    EXPECT_TRUE(recheck(c.system, spec).passed);
    EXPECT_GT(c.score(), 0);
  }
}

TEST(Evolution, SingleCandidatePoolStrategiesCoincide) {
  CandidatePool start = toy_seed_pool();
  start.candidates.resize(1);
  const DesignSpec spec;
  CandidateEvaluator ev(spec, cheap_evaluation());
  std::vector<std::vector<std::pair<std::string, double>>> runs;
  for (auto s : {Strategy::Greedy, Strategy::Pool, Strategy::PoolSwap}) {
    CandidatePool p = start;
    for (int t = 0; t < 2; ++t) p = evolve(p, toy_catalog(), ev, small_config(s, 1));
    runs.push_back(summary(p));
  }
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_EQ(runs[0], runs[2]);
}

TEST(Evolution, BestScoreNeverDecreases) {
  const DesignSpec spec;
  CandidateEvaluator ev(spec, cheap_evaluation());
  for (auto s : {Strategy::Greedy, Strategy::Pool, Strategy::PoolSwap}) {
    CandidatePool p = toy_seed_pool();
    double best = p.best().score();
    for (int t = 1; t <= 3; ++t) {
      p = evolve(p, toy_catalog(), ev, small_config(s, 8, 3));
      EXPECT_EQ(p.iteration, t);
      EXPECT_GE(p.best().score(), best) << to_string(s) << " iteration " << t;
      best = p.best().score();
      EXPECT_LE(p.candidates.size(), 8u);
    }
  }
}

TEST(Evolution, ChildrenPassRecheck) {
  const DesignSpec spec;
  CandidateEvaluator ev(spec, cheap_evaluation());
  EvolutionStats st;
  const CandidatePool p = evolve(toy_seed_pool(), toy_catalog(), ev, small_config(Strategy::PoolSwap, 8, 5), &st);
  EXPECT_GT(st.feasible, 0u);
  for (const auto& c : p.candidates) {
    EXPECT_TRUE(recheck(c.system, spec).passed) << c.key;
    EXPECT_NEAR(system_fov(c.system), spec.fov, spec.fov_tolerance * spec.fov) << c.key;
  }
}

TEST(Evolution, DeterministicAndWorkerIndependent) {
  const DesignSpec spec;
  const auto run = [&](std::size_t workers) {
    EvaluationOptions o = cheap_evaluation();
    o.workers = workers;
    CandidateEvaluator ev(spec, o);
    CandidatePool p = toy_seed_pool();
    for (int t = 0; t < 2; ++t) p = evolve(p, toy_catalog(), ev, small_config(Strategy::PoolSwap, 8, 9));
    return summary(p);
  };
  const auto a = run(1);
  EXPECT_EQ(run(1), a);
  EXPECT_EQ(run(3), a);
}

TEST(Evolution, RandomStrategyGrowsLensCount) {
  const DesignSpec spec;
  CandidateEvaluator ev(spec, cheap_evaluation());
  EvolutionConfig cfg = small_config(Strategy::Random, 8);
  EvolutionStats st;
  const CandidatePool p = evolve(CandidatePool{}, toy_catalog(), ev, cfg, &st);
  EXPECT_EQ(p.iteration, 1);
  EXPECT_GT(st.draws, 0u);
  EXPECT_EQ(st.proposals, st.pruned + st.optimized);
  for (const auto& c : p.candidates) EXPECT_EQ(c.system.lens_count(), 4u);
}

TEST(Evolution, NoChildrenLeavesPoolStagnant) {
  DesignSpec spec;
  spec.max_elements = 3;
  CandidateEvaluator ev(spec, cheap_evaluation());
  EvolutionConfig cfg = small_config(Strategy::Pool, 8);
  cfg.max_draws = 50;
  EvolutionStats st;
  const CandidatePool p = evolve(toy_seed_pool(), toy_catalog(), ev, cfg, &st);
  EXPECT_TRUE(p.stagnant);
  EXPECT_EQ(st.optimized, 0u);
  EXPECT_EQ(summary(p), summary(toy_seed_pool()));
}

TEST(Evolution, EmptyPoolNeedsRandomStrategy) {
  const DesignSpec spec;
  CandidateEvaluator ev(spec, cheap_evaluation());
  EXPECT_THROW(evolve(CandidatePool{}, toy_catalog(), ev, small_config(Strategy::Greedy, 8)), ValidationError);
}

}  // namespace
}  // namespace lf
