#include "lensfactory/run.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

namespace lf {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kStatus = "status.jsonl";
constexpr const char* kEvents = "events.jsonl";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_line(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out << text;
  out.flush();
}

/// Complete JSON lines; a torn last line is skipped.
std::vector<Json> read_lines(const fs::path& path) {
  std::vector<Json> out;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (!j.is_discarded()) out.push_back(std::move(j));
  }
  return out;
}

std::string line(const Json& j) { return j.dump() + "\n"; }

std::string numbered(const std::string& prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%04d", n);
  return prefix + buf;
}

Json iteration_event(const CandidatePool& pool, const EvolutionStats& stats) {
  std::size_t entrants = 0;
  for (const auto& c : pool.candidates) entrants += c.iteration == pool.iteration;
  return {{"type", "iteration"},
          {"iteration", pool.iteration},
          {"best_score", pool.empty() ? 0.0 : pool.best().score()},
          {"pool_size", pool.candidates.size()},
          {"entrants", entrants},
          {"stagnant", pool.stagnant},
          {"stats", to_json(stats)}};
}

std::string iteration_events(const CandidatePool& pool, const EvolutionStats& stats) {
  std::string out = line(iteration_event(pool, stats));
  for (const auto& c : pool.candidates) {
    if (c.iteration != pool.iteration) continue;
    for (const auto& r : c.trace)
      out += line({{"type", "trace"}, {"iteration", pool.iteration}, {"key", c.key}, {"record", to_json(r)}});
  }
  return out;
}

}  // namespace

std::string utc_now() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const std::time_t t = system_clock::to_time_t(now);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::string allocate_id(const fs::path& root, const std::string& prefix) {
  fs::create_directories(root);
  int n = 1;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix + "-", 0) != 0) continue;
    try {
      n = std::max(n, std::stoi(name.substr(prefix.size() + 1)) + 1);
    } catch (const std::exception&) {
    }
  }
  for (;; ++n) {
    const std::string id = numbered(prefix, n);
    if (fs::create_directory(root / id)) return id;
  }
}

// --- Requests ----------------------------------------------------------------------------

Catalog CatalogSource::load() const {
  if (!path.empty()) return load_catalog(path);
  if (synthetic_totals)
    return generate_synthetic_catalog(synthetic_seed,
                                      SyntheticCounts::with_totals(synthetic_totals->first, synthetic_totals->second));
  return generate_synthetic_catalog(synthetic_seed);
}

Json to_json(const CatalogSource& c) {
  if (!c.path.empty()) return {{"path", c.path}};
  Json j = {{"synthetic_seed", c.synthetic_seed}};
  if (c.synthetic_totals) j["synthetic_totals"] = {c.synthetic_totals->first, c.synthetic_totals->second};
  return j;
}

CatalogSource catalog_source_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("catalog: expected an object");
  try {
    CatalogSource c;
    if (j.contains("path")) c.path = j.at("path").get<std::string>();
    if (j.contains("synthetic_seed")) c.synthetic_seed = j.at("synthetic_seed").get<std::uint64_t>();
    if (j.contains("synthetic_totals")) {
      const auto& t = j.at("synthetic_totals");
      c.synthetic_totals = std::pair{t.at(0).get<int>(), t.at(1).get<int>()};
      if (c.synthetic_totals->first < 1 || c.synthetic_totals->second < 1)
        throw ValidationError("catalog: synthetic totals must be positive");
    }
    return c;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("catalog: ") + e.what());
  }
}

void RunRequest::validate() const {
  for (const auto& d : lf::validate(spec))
    if (d.severity == Severity::Error) throw ValidationError("spec." + d.field + ": " + d.message);
  evolution.validate();
  merit.validate();
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  if (prune_pupil.rings < 1 || prune_pupil.spokes < 1) throw ValidationError("prune_pupil must be positive");
  if (workers < 1) throw ValidationError("workers must be >= 1");
}

EvaluationOptions RunRequest::evaluation_options() const {
  EvaluationOptions o;
  o.optimizer.merit = merit;
  o.optimizer.max_iterations = max_iterations;
  o.two_stage = two_stage;
  o.prune_pupil = prune_pupil;
  o.workers = workers;
  o.keep_trace = true;
  return o;
}

Json to_json(const RunRequest& r) {
  return {{"spec", to_json(r.spec)},
          {"evolution", to_json(r.evolution)},
          {"merit", to_json(r.merit)},
          {"two_stage", r.two_stage},
          {"max_iterations", r.max_iterations},
          {"prune_pupil", {{"rings", r.prune_pupil.rings}, {"spokes", r.prune_pupil.spokes}}},
          {"seed_form", to_string(r.seed_form)},
          {"iterations", r.iterations},
          {"catalog", to_json(r.catalog)},
          {"workers", r.workers}};
}

RunRequest run_request_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("request: expected an object");
  if (!j.contains("evolution") || !j.at("evolution").is_object() || !j.at("evolution").contains("seed"))
    throw ValidationError("request: evolution.seed is required");
  static const std::set<std::string> known = {"spec",       "evolution", "merit",   "two_stage", "max_iterations",
                                              "prune_pupil", "seed_form", "iterations", "catalog",  "workers"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ValidationError("request: unknown key " + key);
  try {
    RunRequest r;
    if (j.contains("spec")) r.spec = spec_from_json(j.at("spec"));
    r.evolution = evolution_from_json(j.at("evolution"));
    if (j.contains("merit")) r.merit = merit_from_json(j.at("merit"));
    if (j.contains("two_stage")) r.two_stage = j.at("two_stage").get<bool>();
    if (j.contains("max_iterations")) r.max_iterations = j.at("max_iterations").get<int>();
    if (j.contains("prune_pupil")) {
      const auto& p = j.at("prune_pupil");
      if (p.contains("rings")) r.prune_pupil.rings = p.at("rings").get<int>();
      if (p.contains("spokes")) r.prune_pupil.spokes = p.at("spokes").get<int>();
    }
    if (j.contains("seed_form")) {
      const auto name = parse_seed_name(j.at("seed_form").get<std::string>());
      if (!name) throw ValidationError("request: unknown seed_form");
      r.seed_form = *name;
    }
    if (j.contains("iterations")) r.iterations = j.at("iterations").get<int>();
    if (j.contains("catalog")) r.catalog = catalog_source_from_json(j.at("catalog"));
    if (j.contains("workers")) r.workers = j.at("workers").get<std::size_t>();
    return r;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("request: ") + e.what());
  }
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Queued: return "queued";
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
    case RunStatus::Cancelled: return "cancelled";
  }
  return "unknown";
}

std::optional<RunStatus> parse_run_status(std::string_view text) {
  for (auto s : {RunStatus::Queued, RunStatus::Running, RunStatus::Done, RunStatus::Failed, RunStatus::Cancelled})
    if (text == to_string(s)) return s;
  return std::nullopt;
}

bool is_terminal(RunStatus s) { return s == RunStatus::Done || s == RunStatus::Failed || s == RunStatus::Cancelled; }

// --- RunManager ---------------------------------------------------------------------------

RunManager::RunManager(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "runs"); }

RunManager::~RunManager() {
  std::map<std::string, std::shared_ptr<Active>> active;
  {
    const std::lock_guard lock(mutex_);
    active.swap(active_);
  }
  for (auto& [id, a] : active) a->cancel = true;
  for (auto& [id, a] : active)
    if (a->thread.joinable()) a->thread.join();
}

fs::path RunManager::run_dir(const std::string& id) const {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
    throw NotFound("unknown run " + id);
  const fs::path dir = root_ / "runs" / id;
  if (!fs::exists(dir / kManifest)) throw NotFound("unknown run " + id);
  return dir;
}

fs::path RunManager::snapshot_path(const std::string& id, int iteration) const {
  return run_dir(id) / "snapshots" / (numbered("iteration", iteration) + ".json");
}

void RunManager::append_status(const std::string& id, RunStatus s, const std::string& message) const {
  Json j = {{"status", to_string(s)}, {"time", utc_now()}};
  if (!message.empty()) j["message"] = message;
  const std::lock_guard lock(mutex_);
  append_line(run_dir(id) / kStatus, line(j));
}

void RunManager::append_events(const std::string& id, const std::string& lines) const {
  append_line(run_dir(id) / kEvents, lines);
}

std::string RunManager::create(const RunRequest& request) {
  request.validate();
  const fs::path runs = root_ / "runs";
  const std::string id = allocate_id(runs, "run");
  fs::create_directories(runs / id / "snapshots");
  write_file_atomic(runs / id / kManifest,
                    dump({{"schema_version", kSchemaVersion}, {"id", id}, {"request", to_json(request)}}));
  append_status(id, RunStatus::Queued);
  return id;
}

RunRequest RunManager::request(const std::string& id) const {
  return run_request_from_json(read_json_file(run_dir(id) / kManifest).at("request"));
}

RunStatus RunManager::status(const std::string& id) const {
  const auto lines = read_lines(run_dir(id) / kStatus);
  if (lines.empty()) return RunStatus::Queued;
  return parse_run_status(lines.back().value("status", "")).value_or(RunStatus::Failed);
}

std::vector<std::string> RunManager::ids() const {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root_ / "runs"))
    if (fs::exists(entry.path() / kManifest)) out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> RunManager::snapshot_iterations(const std::string& id) const {
  std::vector<int> out;
  for (const auto& entry : fs::directory_iterator(run_dir(id) / "snapshots")) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("iteration-", 0) != 0 || entry.path().extension() != ".json") continue;
    try {
      out.push_back(std::stoi(name.substr(10)));
    } catch (const std::exception&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Json RunManager::snapshot(const std::string& id, int iteration) const {
  const fs::path p = snapshot_path(id, iteration);
  if (!fs::exists(p)) throw NotFound("run " + id + " has no snapshot for iteration " + std::to_string(iteration));
  return read_json_file(p);
}

CandidatePool RunManager::latest_pool(const std::string& id, const Catalog& catalog) const {
  const auto its = snapshot_iterations(id);
  if (its.empty()) return {};
  return pool_from_json(snapshot(id, its.back()).at("pool"), catalog);
}

std::string RunManager::events(const std::string& id) const { return read_text(run_dir(id) / kEvents); }

void RunManager::execute(const std::string& id) {
  const RunStatus current = status(id);
  if (is_terminal(current))
    throw InvalidTransition("run " + id + " is " + std::string(to_string(current)));
  const RunRequest req = request(id);
  Active* act = active(id);
  const std::atomic<bool>* cancel = act ? &act->cancel : nullptr;
  auto cancelled = [&] { return (cancel && cancel->load()) || status(id) == RunStatus::Cancelled; };

  const auto done = snapshot_iterations(id);
  append_status(id, RunStatus::Running,
                done.empty() ? std::string{} : "resumed after iteration " + std::to_string(done.back()));
  try {
    const Catalog catalog = req.catalog.load();
    EvaluationOptions options = req.evaluation_options();
    options.cancel = cancel;
    const CandidateEvaluator evaluator(req.spec, options);

    // Events past the last snapshot belong to an iteration that never finished.
    if (!done.empty()) {
      std::string kept;
      for (const auto& j : read_lines(run_dir(id) / kEvents))
        if (j.value("iteration", 0) <= done.back()) kept += line(j);
      write_file_atomic(run_dir(id) / kEvents, kept);
    } else {
      write_file_atomic(run_dir(id) / kEvents, "");
    }

    auto persist = [&](const CandidatePool& pool, const EvolutionStats& stats) {
      append_events(id, iteration_events(pool, stats));
      Json snap = {{"schema_version", kSchemaVersion},
                   {"iteration", pool.iteration},
                   {"rng", {{"seed", req.evolution.seed}, {"next_iteration", pool.iteration + 1}}},
                   {"stats", to_json(stats)},
                   {"pool", to_json(pool)}};
      write_file_atomic(snapshot_path(id, pool.iteration), dump(snap));
    };

    CandidatePool pool;
    if (done.empty()) {
      EvolutionStats stats;
      pool = seed_pool(catalog, evaluator, seed_preset(req.seed_form, req.spec), req.evolution, &stats);
      if (cancelled()) {
        if (status(id) != RunStatus::Cancelled) append_status(id, RunStatus::Cancelled);
        return;
      }
      persist(pool, stats);
    } else {
      pool = pool_from_json(snapshot(id, done.back()).at("pool"), catalog);
    }
    while (pool.iteration < req.iterations) {
      if (cancelled()) break;
      EvolutionStats stats;
      CandidatePool next = evolve(pool, catalog, evaluator, req.evolution, &stats);
      if (cancelled()) break;
      persist(next, stats);
      pool = std::move(next);
    }
    if (cancelled()) {
      if (status(id) != RunStatus::Cancelled) append_status(id, RunStatus::Cancelled);
      return;
    }
    append_status(id, RunStatus::Done);
  } catch (const std::exception& e) {
    append_status(id, RunStatus::Failed, e.what());
  }
}

RunManager::Active* RunManager::active(const std::string& id) {
  const std::lock_guard lock(mutex_);
  auto it = active_.find(id);
  return it == active_.end() ? nullptr : it->second.get();
}

void RunManager::launch(const std::string& id) {
  auto a = std::make_shared<Active>();
  {
    const std::lock_guard lock(mutex_);
    if (auto it = active_.find(id); it != active_.end() && it->second->thread.joinable() &&
                                    !is_terminal(status(id)))
      throw InvalidTransition("run " + id + " is already executing");
    active_[id] = a;
  }
  a->thread = std::jthread([this, id] { execute(id); });
}

std::string RunManager::start(const RunRequest& request) {
  const std::string id = create(request);
  launch(id);
  return id;
}

void RunManager::resume_async(const std::string& id) {
  const RunStatus s = status(id);
  if (is_terminal(s)) throw InvalidTransition("run " + id + " is " + std::string(to_string(s)));
  launch(id);
}

void RunManager::wait(const std::string& id) {
  std::shared_ptr<Active> a;
  {
    const std::lock_guard lock(mutex_);
    if (auto it = active_.find(id); it != active_.end()) a = it->second;
  }
  if (!a) return;
  const std::lock_guard lock(a->join_mutex);
  if (a->thread.joinable()) a->thread.join();
}

void RunManager::cancel(const std::string& id) {
  const RunStatus s = status(id);
  if (is_terminal(s)) throw InvalidTransition("cannot cancel run " + id + ": it is " + std::string(to_string(s)));
  if (Active* a = active(id); a && a->thread.joinable()) {
    a->cancel = true;
    return;
  }
  append_status(id, RunStatus::Cancelled);
}

Json RunManager::record(const std::string& id) const {
  const Json manifest = read_json_file(run_dir(id) / kManifest);
  const auto history = read_lines(run_dir(id) / kStatus);
  Json timing = Json::object();
  for (const auto& h : history) {
    const std::string s = h.value("status", "");
    const std::string t = h.value("time", "");
    if (s == "queued" && !timing.contains("created")) timing["created"] = t;
    if (s == "running" && !timing.contains("started")) timing["started"] = t;
    if (parse_run_status(s) && is_terminal(*parse_run_status(s))) timing["finished"] = t;
  }

  Json iterations = Json::array();
  Json best = Json::array();
  const auto its = snapshot_iterations(id);
  for (int it : its) {
    const Json snap = snapshot(id, it);
    const auto& cands = snap.at("pool").at("candidates");
    iterations.push_back({{"iteration", it},
                          {"best_score", cands.empty() ? 0.0 : cands.at(0).at("score").get<double>()},
                          {"pool_size", cands.size()},
                          {"stats", snap.at("stats")}});
    if (it == its.back()) {
      for (std::size_t r = 0; r < std::min<std::size_t>(5, cands.size()); ++r) {
        const auto& c = cands.at(r);
        best.push_back({{"rank", r},
                        {"key", c.at("key")},
                        {"score", c.at("score")},
                        {"mtf50", c.at("report").at("mtf50")},
                        {"iteration", c.at("iteration")}});
      }
    }
  }
  return {{"schema_version", kSchemaVersion},
          {"id", id},
          {"status", to_string(status(id))},
          {"request", manifest.at("request")},
          {"history", history},
          {"iterations", iterations},
          {"best", best},
          {"timing", timing}};
}

}  // namespace lf
