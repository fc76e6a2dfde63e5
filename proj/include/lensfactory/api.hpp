#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "lensfactory/run.hpp"

namespace lf {

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using Query = std::map<std::string, std::string>;

/// Error body: {"schema_version", "error": {"type", "message"}} with the matching HTTP status.
ApiResponse error_response(const std::exception& e);

/// Background tolerance analyses under root/tolerance/tol-NNNN.
class ToleranceJobs {
 public:
  explicit ToleranceJobs(std::filesystem::path root);
  ~ToleranceJobs();

  /// Writes the job file; the caller runs it with execute() or launch().
  std::string create(const Json& job);
  void execute(const std::string& id, const LensSystem& system, const MeritConfig& merit);
  void launch(const std::string& id, LensSystem system, MeritConfig merit);
  void wait(const std::string& id);
  Json record(const std::string& id) const;

 private:
  std::filesystem::path dir(const std::string& id) const;

  std::filesystem::path root_;
  std::mutex mutex_;
  std::map<std::string, std::jthread> threads_;
};

/// Request router shared by the HTTP server and the command-line tool, so both produce
/// the same bytes for the same request.
class Api {
 public:
  explicit Api(std::filesystem::path root);

  RunManager& runs() { return runs_; }
  ToleranceJobs& tolerance() { return tolerance_; }

  ApiResponse handle(std::string_view method, std::string_view path, const Query& query = {},
                     std::string_view body = {});

  // Handlers; they throw, handle() converts exceptions to error responses.
  Json validate_spec(const Json& spec) const;
  Json list_runs() const;
  Json run_record(const std::string& id) const;
  Json list_candidates(const std::string& id, const Query& query);
  Json candidate_detail(const std::string& id, std::size_t rank, const Query& query);
  ApiResponse candidate_psf(const std::string& id, std::size_t rank, const Query& query);
  Json candidate_mtf(const std::string& id, std::size_t rank, const Query& query);
  Json candidate_calibration(const std::string& id, std::size_t rank, const Query& query);
  /// Creates a tolerance job for a candidate; returns its id. Runs in the background when
  /// `background` is set, otherwise before returning.
  std::string start_tolerance(const std::string& id, std::size_t rank, const Json& config, bool background);
  Json tolerance_record(const std::string& job) const;

  /// Catalog of a run, loaded once per source.
  std::shared_ptr<const Catalog> catalog(const CatalogSource& source);
  /// Merit settings a run evaluates with, fields resolved.
  static MeritConfig run_merit(const RunRequest& request);

 private:
  struct Loaded {
    RunRequest request;
    std::shared_ptr<const Catalog> catalog;
    int iteration = 0;
    Candidate candidate;
  };
  Loaded load_candidate(const std::string& id, std::size_t rank, const Query& query);

  RunManager runs_;
  ToleranceJobs tolerance_;
  std::mutex catalog_mutex_;
  std::map<std::string, std::shared_ptr<const Catalog>> catalogs_;
};

}  // namespace lf
