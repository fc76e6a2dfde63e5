#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lensfactory/error.hpp"
#include "lensfactory/io.hpp"

namespace lf {

/// Where a run's catalog comes from: a CSV file, or the synthetic generator.
struct CatalogSource {
  std::string path;  // empty: synthetic
  std::uint64_t synthetic_seed = 7;
  std::optional<std::pair<int, int>> synthetic_totals;  // positive, negative

  Catalog load() const;
};

Json to_json(const CatalogSource& c);
CatalogSource catalog_source_from_json(const Json& j);

struct RunRequest {
  DesignSpec spec;
  EvolutionConfig evolution;
  MeritConfig merit;  // empty fields: the design's sensor-diagonal fields
  bool two_stage = true;
  int max_iterations = 200;  // continuous optimizer
  PupilGrid prune_pupil{4, 8};
  SeedName seed_form = SeedName::Triplet;
  int iterations = 3;  // evolution rounds after the seed pool
  CatalogSource catalog;
  std::size_t workers = 1;  // does not change results

  /// Throws ValidationError.
  void validate() const;
  EvaluationOptions evaluation_options() const;
};

Json to_json(const RunRequest& r);
/// `evolution.seed` is required.
RunRequest run_request_from_json(const Json& j);

enum class RunStatus { Queued, Running, Done, Failed, Cancelled };
std::string_view to_string(RunStatus s);
std::optional<RunStatus> parse_run_status(std::string_view text);
bool is_terminal(RunStatus s);

/// Run directories under a root: manifest.json, status.jsonl (append-only),
/// snapshots/iteration-NNNN.json (one per finished iteration) and events.jsonl.
class RunManager {
 public:
  explicit RunManager(std::filesystem::path root);
  /// Cancels and joins background runs.
  ~RunManager();
  RunManager(const RunManager&) = delete;
  RunManager& operator=(const RunManager&) = delete;

  const std::filesystem::path& root() const { return root_; }

  /// Writes the manifest and the queued status. Returns the run id.
  std::string create(const RunRequest& request);
  /// Runs (or continues from the last snapshot) on the calling thread until a terminal status.
  void execute(const std::string& id);
  /// create() then execute() on a background thread.
  std::string start(const RunRequest& request);
  /// Continues a run that stopped without a terminal status, on a background thread.
  void resume_async(const std::string& id);
  void wait(const std::string& id);
  /// Throws InvalidTransition for a finished run, NotFound for an unknown one.
  void cancel(const std::string& id);

  std::vector<std::string> ids() const;
  RunStatus status(const std::string& id) const;
  RunRequest request(const std::string& id) const;
  /// Finished iterations, in order.
  std::vector<int> snapshot_iterations(const std::string& id) const;
  Json snapshot(const std::string& id, int iteration) const;
  /// Pool of the last finished iteration; empty before the seed pool exists.
  CandidatePool latest_pool(const std::string& id, const Catalog& catalog) const;
  /// Summary record: status history, per-iteration progress and the best candidates.
  Json record(const std::string& id) const;
  std::string events(const std::string& id) const;

  std::filesystem::path run_dir(const std::string& id) const;
  std::filesystem::path snapshot_path(const std::string& id, int iteration) const;

 private:
  struct Active {
    std::atomic<bool> cancel{false};
    std::mutex join_mutex;
    std::jthread thread;
  };

  void append_status(const std::string& id, RunStatus s, const std::string& message = {}) const;
  void append_events(const std::string& id, const std::string& lines) const;
  void launch(const std::string& id);
  Active* active(const std::string& id);

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Active>> active_;
};

/// Creates `root/<prefix>-NNNN` with the next free number.
std::string allocate_id(const std::filesystem::path& root, const std::string& prefix);

/// ISO-8601 UTC with milliseconds.
std::string utc_now();

}  // namespace lf
