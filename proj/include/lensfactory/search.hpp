#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lensfactory/design.hpp"
#include "lensfactory/optimize.hpp"

namespace lf {

// --- Layouts -----------------------------------------------------------------------

/// Lens sequence with the stop position (number of lenses in front of it) and the
/// vertex spacing between consecutive lenses.
struct LensLayout {
  std::vector<ElementInstance> lenses;
  std::size_t stop_position = 0;
  std::vector<double> spacings;  // size lenses - 1
  double end_gap = 1.0;          // stop to lens when the stop is first or last
};

/// A stop between lenses splits their spacing in half. The sensor sits at the paraxial
/// focus when there is one.
LensSystem assemble(const LensLayout& layout, const DesignSpec& spec);
LensLayout layout_of(const LensSystem& system);

/// Identity for de-duplication: stock ids with flip marks and the stop slot, gaps excluded.
std::string candidate_key(const LensSystem& system);
std::vector<std::string> stock_sequence(const LensSystem& system);

// --- Seed forms and enumeration ------------------------------------------------------

enum class SeedName { Singlet, Triplet, DoubleGauss };
std::string_view to_string(SeedName name);
std::optional<SeedName> parse_seed_name(std::string_view text);

struct SeedSlot {
  PowerSign sign = PowerSign::Positive;
  double base_power = 0;     // diopters, magnitude
  double base_diameter = 0;  // mm
};

struct SeedForm {
  SeedName name = SeedName::Triplet;
  std::vector<SeedSlot> slots;
  std::vector<std::size_t> stop_positions;
  double initial_gap = 2.0;  // mm between consecutive lenses
};

/// Thin-lens power allocation for the design's focal length.
SeedForm seed_preset(SeedName name, const DesignSpec& spec);

struct EnumerationOptions {
  double tolerance = 0.25;  // power and diameter; >= 1 drops the constraint
  bool flips = false;
};

/// Lazy Cartesian product of slot candidates x stop positions, last slot fastest and
/// stop positions innermost.
class SeedEnumerator {
 public:
  SeedEnumerator(const Catalog& catalog, const DesignSpec& spec, SeedForm form, EnumerationOptions options = {});

  /// Catalog elements admitted per slot, before flips.
  std::span<const std::size_t> slot_counts() const { return element_counts_; }
  /// Exact stream length.
  std::uint64_t count() const;
  std::optional<LensSystem> next();
  void reset();

 private:
  DesignSpec spec_;
  SeedForm form_;
  std::vector<std::vector<ElementInstance>> choices_;
  std::vector<std::size_t> element_counts_;
  std::vector<std::size_t> odometer_;
  std::size_t stop_ = 0;
  bool done_ = false;
};

/// Product of slot counts times stop positions, with flip factors when given.
std::uint64_t enumeration_count(std::span<const std::uint64_t> slot_counts, std::uint64_t stop_positions);

// --- Pruning -----------------------------------------------------------------------

enum class PruneTest { None, Basic, Focus, FNumber, Fov, Vignetting };
std::string_view to_string(PruneTest test);

struct PruneResult {
  bool passed = false;
  PruneTest failed = PruneTest::None;
  std::string reason;
  LensSystem system;  // focused, with the stop set for the f-number
};

/// Basic (cost, element count, length), focus, f-number, field of view, vignetting; stops
/// at the first failure.
PruneResult prune(const LensSystem& system, const DesignSpec& spec, const PupilGrid& pupil = {4, 8});

/// Flange, field-of-view and vignetting tests at the system's own sensor gap.
PruneResult recheck(const LensSystem& system, const DesignSpec& spec, const PupilGrid& pupil = {4, 8});

// --- Splitting -----------------------------------------------------------------------

struct SplitConfig {
  double alpha = 0.25;
  double diameter_tol = 0.25;
  bool curvature_rule = true;
  bool power_ranked = true;
  bool flips = true;
  double pair_gap = 1.0;  // mm
};

using ElementPair = std::pair<ElementInstance, ElementInstance>;

/// Ordered catalog pairs that may replace `element`.
std::vector<ElementPair> split_pairs(const LensElement& element, const Catalog& catalog, const SplitConfig& config);

/// Systems with lens `lens_index` (0-based among lenses) replaced by each admissible pair,
/// at every stop position. Throws std::out_of_range for a bad index.
std::vector<LensSystem> split_element(const LensSystem& system, std::size_t lens_index, const Catalog& catalog,
                                      const SplitConfig& config, const DesignSpec& spec);
/// One pair, every stop position.
std::vector<LensSystem> split_with(const LensLayout& layout, std::size_t lens_index, const ElementPair& pair,
                                   const SplitConfig& config, const DesignSpec& spec);

/// Lens indices by descending |power|, then descending max curvature, then index.
std::vector<std::size_t> rank_split_targets(const LensSystem& system);
std::vector<std::size_t> rank_split_targets(std::span<const ElementInstance> lenses);

// --- Candidates and evaluation ----------------------------------------------------------

struct Candidate {
  LensSystem system;
  MeritReport report;
  std::string key;
  std::vector<std::string> stock_ids;
  std::vector<double> start_gaps;  // before continuous optimization
  std::vector<TraceRecord> trace;  // accepted optimizer steps, when kept
  int iteration = 0;
  double score() const { return report.mtf_area; }
};

/// Pool order: mtf_area descending, then stock-id sequence, then key.
bool ranks_before(const Candidate& a, const Candidate& b);

struct CandidatePool {
  int iteration = 0;
  std::vector<Candidate> candidates;
  bool stagnant = false;

  bool empty() const { return candidates.empty(); }
  const Candidate& best() const { return candidates.front(); }
  /// Sorted union, de-duplicated by key (first in rank order wins), truncated to n.
  void merge(std::vector<Candidate> more, std::size_t n);
};

struct EvaluationOptions {
  OptOptions optimizer;  // merit fields default to the design's when empty
  bool two_stage = true;
  PupilGrid prune_pupil{4, 8};
  std::size_t workers = 1;
  bool keep_trace = false;
  /// When set and true, remaining optimizations return empty without being memoized.
  const std::atomic<bool>* cancel = nullptr;
};

/// Prune + continuous optimization + report, memoized on the exact input system.
class CandidateEvaluator {
 public:
  CandidateEvaluator(DesignSpec spec, EvaluationOptions options);

  const DesignSpec& spec() const { return spec_; }
  const EvaluationOptions& options() const { return options_; }
  PruneResult prune(const LensSystem& system) const;
  /// Empty when optimization fails or the optimized system fails the recheck.
  std::optional<Candidate> optimize(const LensSystem& pruned) const;
  /// Results in input order; runs on options().workers threads.
  std::vector<std::optional<Candidate>> optimize_all(std::span<const LensSystem> pruned) const;
  std::size_t optimizations() const;

 private:
  DesignSpec spec_;
  EvaluationOptions options_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::optional<Candidate>> memo_;
  mutable std::size_t misses_ = 0;
};

// --- Evolution --------------------------------------------------------------------------

enum class Strategy { Random, Greedy, Pool, PoolSwap };
std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view text);

struct EvolutionConfig {
  Strategy strategy = Strategy::PoolSwap;
  std::size_t pool_size = 60;
  std::size_t budget = 500;  // continuous-optimization runs per iteration
  std::size_t max_draws = 0;  // 0: 20 x budget
  std::size_t seed_elements = 3;  // lens count at iteration 0, for the random strategy
  std::uint64_t seed = 0;
  SplitConfig split;
  EnumerationOptions enumeration;

  /// Throws ValidationError.
  void validate() const;
};

struct EvolutionStats {
  std::size_t draws = 0;
  std::size_t proposals = 0;
  std::size_t pruned = 0;
  std::size_t optimized = 0;
  std::size_t feasible = 0;
};

/// Iteration 0: the seed enumeration, pruned, sampled down to the budget, optimized.
CandidatePool seed_pool(const Catalog& catalog, const CandidateEvaluator& evaluator, const SeedForm& form,
                        const EvolutionConfig& config, EvolutionStats* stats = nullptr);

/// One iteration of the configured strategy.
CandidatePool evolve(const CandidatePool& pool, const Catalog& catalog, const CandidateEvaluator& evaluator,
                     const EvolutionConfig& config, EvolutionStats* stats = nullptr);

}  // namespace lf
