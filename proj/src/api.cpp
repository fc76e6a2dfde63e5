#include "lensfactory/api.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace lf {

namespace fs = std::filesystem;

namespace {

Json versioned(Json j) {
  Json out = {{"schema_version", kSchemaVersion}};
  for (auto& [k, v] : j.items()) out[k] = std::move(v);
  return out;
}

ApiResponse json_response(const Json& j, int status = 200) { return {status, "application/json", dump(j)}; }

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> out;
  while (!path.empty()) {
    const auto slash = path.find('/');
    const auto part = path.substr(0, slash);
    if (!part.empty()) out.push_back(part);
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return out;
}

template <class T>
T parse_number(std::string_view text, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ValidationError(std::string(what) + ": not a number: " + std::string(text));
  return value;
}

template <class T>
T query_number(const Query& q, const char* key, T fallback) {
  const auto it = q.find(key);
  return it == q.end() || it->second.empty() ? fallback : parse_number<T>(it->second, key);
}

Json parse_body(std::string_view body) {
  if (body.empty()) return Json::object();
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded()) throw ValidationError("request body is not valid JSON");
  return j;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_line(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  out << j.dump() << "\n";
}

std::vector<Json> read_lines(const fs::path& path) {
  std::vector<Json> out;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    Json j = Json::parse(line, nullptr, false);
    if (!line.empty() && !j.is_discarded()) out.push_back(std::move(j));
  }
  return out;
}

struct Pair {
  std::size_t emitter = 0;
  std::size_t channel = 0;
};

Pair query_pair(const Query& q, const ExitRayCache& cache) {
  Pair p{query_number<std::size_t>(q, "field", 0), query_number<std::size_t>(q, "channel", 0)};
  if (p.emitter >= cache.emitter_count())
    throw ValidationError("field must be < " + std::to_string(cache.emitter_count()));
  if (p.channel >= cache.channel_count())
    throw ValidationError("channel must be < " + std::to_string(cache.channel_count()));
  return p;
}

Json paraxial_json(const ParaxialResult& p) {
  return {{"efl", p.efl},
          {"bfl", p.bfl},
          {"ffl", p.ffl},
          {"entrance_pupil_z", p.entrance_pupil_z},
          {"entrance_pupil_diameter", p.entrance_pupil_diameter},
          {"exit_pupil_z", p.exit_pupil_z},
          {"exit_pupil_diameter", p.exit_pupil_diameter},
          {"first_z", p.first_z},
          {"last_z", p.last_z},
          {"afocal", p.afocal}};
}

}  // namespace

ApiResponse error_response(const std::exception& e) {
  int status = 500;
  std::string type = "internal";
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e)) {
    status = 400;
    type = "validation";
  } else if (dynamic_cast<const NotFound*>(&e)) {
    status = 404;
    type = "not_found";
  } else if (dynamic_cast<const InvalidTransition*>(&e)) {
    status = 409;
    type = "invalid_transition";
  } else if (dynamic_cast<const Error*>(&e)) {
    status = 422;
    type = "unprocessable";
  }
  return json_response(versioned({{"error", {{"type", type}, {"message", e.what()}}}}), status);
}

// --- Tolerance jobs --------------------------------------------------------------------------

ToleranceJobs::ToleranceJobs(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

ToleranceJobs::~ToleranceJobs() {
  const std::lock_guard lock(mutex_);
  threads_.clear();
}

fs::path ToleranceJobs::dir(const std::string& id) const {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
    throw NotFound("unknown tolerance job " + id);
  const fs::path d = root_ / id;
  if (!fs::exists(d / "job.json")) throw NotFound("unknown tolerance job " + id);
  return d;
}

std::string ToleranceJobs::create(const Json& job) {
  const std::string id = allocate_id(root_, "tol");
  Json j = versioned(job);
  j["id"] = id;
  write_file_atomic(root_ / id / "job.json", dump(j));
  append_line(root_ / id / "status.jsonl", {{"status", "queued"}, {"time", utc_now()}});
  return id;
}

void ToleranceJobs::execute(const std::string& id, const LensSystem& system, const MeritConfig& merit) {
  const fs::path d = dir(id);
  append_line(d / "status.jsonl", {{"status", "running"}, {"time", utc_now()}});
  try {
    const Json job = read_json_file(d / "job.json");
    const ToleranceConfig config = tolerance_config_from_json(job.at("config"));
    const ToleranceReport report = run_tolerance(system, merit, config, job.value("keep_raw", false));
    write_file_atomic(d / "report.json", dump(to_json(report)));
    if (!report.raw.empty()) write_file_atomic(d / "raw.csv", raw_scores_csv(report));
    append_line(d / "status.jsonl", {{"status", "done"}, {"time", utc_now()}});
  } catch (const std::exception& e) {
    append_line(d / "status.jsonl", {{"status", "failed"}, {"time", utc_now()}, {"message", e.what()}});
  }
}

void ToleranceJobs::launch(const std::string& id, LensSystem system, MeritConfig merit) {
  const std::lock_guard lock(mutex_);
  threads_[id] = std::jthread([this, id, system = std::move(system), merit = std::move(merit)] {
    execute(id, system, merit);
  });
}

void ToleranceJobs::wait(const std::string& id) {
  std::jthread t;
  {
    const std::lock_guard lock(mutex_);
    if (auto it = threads_.find(id); it != threads_.end()) {
      t = std::move(it->second);
      threads_.erase(it);
    }
  }
}

Json ToleranceJobs::record(const std::string& id) const {
  const fs::path d = dir(id);
  Json j = read_json_file(d / "job.json");
  const auto history = read_lines(d / "status.jsonl");
  j["status"] = history.empty() ? "queued" : history.back().value("status", "queued");
  j["history"] = history;
  if (fs::exists(d / "report.json")) j["report"] = read_json_file(d / "report.json");
  return j;
}

// --- Api -------------------------------------------------------------------------------

Api::Api(fs::path root) : runs_(root), tolerance_(root / "tolerance") {}

std::shared_ptr<const Catalog> Api::catalog(const CatalogSource& source) {
  const std::string key = to_json(source).dump();
  const std::lock_guard lock(catalog_mutex_);
  auto& slot = catalogs_[key];
  if (!slot) slot = std::make_shared<const Catalog>(source.load());
  return slot;
}

MeritConfig Api::run_merit(const RunRequest& request) {
  return CandidateEvaluator(request.spec, request.evaluation_options()).options().optimizer.merit;
}

Json Api::validate_spec(const Json& spec) const {
  return versioned(to_json(validate_and_sketch(spec_from_json(spec))));
}

Json Api::list_runs() const {
  Json runs = Json::array();
  for (const auto& id : runs_.ids()) runs.push_back({{"id", id}, {"status", to_string(runs_.status(id))}});
  return versioned({{"runs", runs}});
}

Json Api::run_record(const std::string& id) const { return runs_.record(id); }

Api::Loaded Api::load_candidate(const std::string& id, std::size_t rank, const Query& query) {
  Loaded out;
  out.request = runs_.request(id);
  out.catalog = catalog(out.request.catalog);
  const auto its = runs_.snapshot_iterations(id);
  if (its.empty()) throw NotFound("run " + id + " has no candidates yet");
  out.iteration = query_number<int>(query, "iteration", its.back());
  const Json snap = runs_.snapshot(id, out.iteration);
  const auto& cands = snap.at("pool").at("candidates");
  if (rank >= cands.size()) throw NotFound("run " + id + " has no candidate of rank " + std::to_string(rank));
  out.candidate = candidate_from_json(cands.at(rank), *out.catalog);
  return out;
}

Json Api::list_candidates(const std::string& id, const Query& query) {
  const auto its = runs_.snapshot_iterations(id);
  if (its.empty()) return versioned({{"run", id}, {"iteration", nullptr}, {"candidates", Json::array()}});
  const int iteration = query_number<int>(query, "iteration", its.back());
  const Json snap = runs_.snapshot(id, iteration);
  Json list = Json::array();
  std::size_t rank = 0;
  for (const auto& c : snap.at("pool").at("candidates")) {
    const auto& report = c.at("report");
    list.push_back({{"rank", rank++},
                    {"key", c.at("key")},
                    {"stock_ids", c.at("stock_ids")},
                    {"iteration", c.at("iteration")},
                    {"score", c.at("score")},
                    {"mtf50", report.at("mtf50")},
                    {"mtf50_lwph", report.at("mtf50_lwph")},
                    {"objective", report.at("objective")}});
  }
  return versioned({{"run", id}, {"iteration", iteration}, {"candidates", list}});
}

Json Api::candidate_detail(const std::string& id, std::size_t rank, const Query& query) {
  const Loaded l = load_candidate(id, rank, query);
  const LensSystem& sys = l.candidate.system;
  const MeritConfig merit = run_merit(l.request);
  const ExitRayCache cache(sys, merit, true);
  const SensorPlane sensor = cache.sensor_plane(sys.sensor_gap, sys.sensor_tilt());
  const PsfOptions options = psf_options(merit);

  Json psf = Json::array(), mtf = Json::array();
  for (std::size_t e = 0; e < cache.emitter_count(); ++e) {
    for (std::size_t j = 0; j < cache.channel_count(); ++j) {
      try {
        const PsfGrid g = channel_psf(cache, e, j, sensor, options);
        psf.push_back({{"field", e}, {"channel", j}, {"psf", to_json(g)}});
        mtf.push_back({{"field", e},
                       {"channel", j},
                       {"mtf", to_json(mtf_from_psf(g, tangential_direction(cache, e, sensor), 2.0 * merit.cutoff()))}});
      } catch (const TooFewRays&) {
        psf.push_back({{"field", e}, {"channel", j}, {"psf", nullptr}});
        mtf.push_back({{"field", e}, {"channel", j}, {"mtf", nullptr}});
      }
    }
  }

  Json elements = Json::array();
  for (const auto& c : sys.components)
    if (const auto* inst = std::get_if<ElementInstance>(&c)) elements.push_back(to_json(*inst->element));

  Json trace = Json::array();
  for (const auto& line : read_lines(runs_.run_dir(id) / "events.jsonl"))
    if (line.value("type", "") == "trace" && line.value("iteration", -1) == l.candidate.iteration &&
        line.value("key", "") == l.candidate.key)
      trace.push_back(line.at("record"));

  Json c = to_json(l.candidate);
  return versioned({{"run", id},
                    {"rank", rank},
                    {"iteration", l.iteration},
                    {"candidate", c},
                    {"elements", elements},
                    {"paraxial", paraxial_json(cache.paraxial())},
                    {"length", sys.length()},
                    {"cost", sys.total_cost()},
                    {"psf", psf},
                    {"mtf", mtf},
                    {"trace", trace}});
}

ApiResponse Api::candidate_psf(const std::string& id, std::size_t rank, const Query& query) {
  const Loaded l = load_candidate(id, rank, query);
  const LensSystem& sys = l.candidate.system;
  const MeritConfig merit = run_merit(l.request);
  const ExitRayCache cache(sys, merit, true);
  const Pair p = query_pair(query, cache);
  const PsfGrid g = channel_psf(cache, p.emitter, p.channel, cache.sensor_plane(sys.sensor_gap, sys.sensor_tilt()),
                                psf_options(merit));
  if (auto it = query.find("format"); it != query.end() && it->second == "text")
    return {200, "text/plain", psf_text(g)};
  return json_response(
      versioned({{"run", id}, {"rank", rank}, {"field", p.emitter}, {"channel", p.channel}, {"psf", to_json(g)}}));
}

Json Api::candidate_mtf(const std::string& id, std::size_t rank, const Query& query) {
  const Loaded l = load_candidate(id, rank, query);
  const LensSystem& sys = l.candidate.system;
  const MeritConfig merit = run_merit(l.request);
  const ExitRayCache cache(sys, merit, true);
  const Pair p = query_pair(query, cache);
  const SensorPlane sensor = cache.sensor_plane(sys.sensor_gap, sys.sensor_tilt());
  const PsfGrid g = channel_psf(cache, p.emitter, p.channel, sensor, psf_options(merit));
  const MtfCurve curve = mtf_from_psf(g, tangential_direction(cache, p.emitter, sensor), 2.0 * merit.cutoff());
  const MtfScores tan = mtf_scores(curve.frequency, curve.tangential, merit.cutoff(), sys.sensor.height);
  const MtfScores sag = mtf_scores(curve.frequency, curve.sagittal, merit.cutoff(), sys.sensor.height);
  return versioned({{"run", id},
                    {"rank", rank},
                    {"field", p.emitter},
                    {"channel", p.channel},
                    {"cutoff", merit.cutoff()},
                    {"mtf50_tangential", tan.mtf50},
                    {"mtf50_sagittal", sag.mtf50},
                    {"mtf", to_json(curve)}});
}

Json Api::candidate_calibration(const std::string& id, std::size_t rank, const Query& query) {
  const Loaded l = load_candidate(id, rank, query);
  const int density = query_number<int>(query, "density", 9);
  if (density < 2 || density > 101) throw ValidationError("density must be in [2, 101]");
  return versioned({{"run", id},
                    {"rank", rank},
                    {"calibration", to_json(calibration_table(l.candidate.system, run_merit(l.request), density))}});
}

std::string Api::start_tolerance(const std::string& id, std::size_t rank, const Json& body, bool background) {
  const Loaded l = load_candidate(id, rank, {});
  const ToleranceConfig config = tolerance_config_from_json(body.is_object() ? body : Json::object());
  config.validate();
  const bool keep_raw = body.is_object() && body.value("keep_raw", false);
  const std::string job =
      tolerance_.create({{"run", id}, {"rank", rank}, {"iteration", l.iteration}, {"key", l.candidate.key},
                         {"config", to_json(config)}, {"keep_raw", keep_raw}});
  if (background)
    tolerance_.launch(job, l.candidate.system, run_merit(l.request));
  else
    tolerance_.execute(job, l.candidate.system, run_merit(l.request));
  return job;
}

Json Api::tolerance_record(const std::string& job) const { return tolerance_.record(job); }

ApiResponse Api::handle(std::string_view method, std::string_view path, const Query& query, std::string_view body) {
  try {
    const auto parts = split_path(path);
    const auto n = parts.size();
    auto is = [&](std::size_t i, std::string_view s) { return i < n && parts[i] == s; };
    auto method_not_allowed = [&] {
      return json_response(
          versioned({{"error", {{"type", "method_not_allowed"}, {"message", std::string(method) + " " + std::string(path)}}}}),
          405);
    };
    const bool get = method == "GET", post = method == "POST";
    if (!is(0, "api")) throw NotFound("no route " + std::string(path));

    if (n == 3 && is(1, "spec") && is(2, "validate")) {
      if (!post) return method_not_allowed();
      return json_response(validate_spec(parse_body(body)));
    }
    if (n == 3 && is(1, "tolerance")) {
      if (!get) return method_not_allowed();
      return json_response(tolerance_record(std::string(parts[2])));
    }
    if (n >= 2 && is(1, "runs")) {
      if (n == 2) {
        if (get) return json_response(list_runs());
        if (!post) return method_not_allowed();
        const std::string id = runs_.start(run_request_from_json(parse_body(body)));
        return json_response(run_record(id), 201);
      }
      const std::string id(parts[2]);
      if (n == 3) {
        if (!get) return method_not_allowed();
        return json_response(run_record(id));
      }
      if (n == 4 && (is(3, "cancel") || is(3, "resume"))) {
        if (!post) return method_not_allowed();
        if (is(3, "cancel"))
          runs_.cancel(id);
        else
          runs_.resume_async(id);
        return json_response(run_record(id), 202);
      }
      if (n == 4 && is(3, "events")) {
        if (!get) return method_not_allowed();
        runs_.run_dir(id);
        return {200, "application/x-ndjson", runs_.events(id)};
      }
      if (is(3, "candidates")) {
        if (n == 4) {
          if (!get) return method_not_allowed();
          return json_response(list_candidates(id, query));
        }
        const auto rank = parse_number<std::size_t>(parts[4], "rank");
        if (n == 5) {
          if (!get) return method_not_allowed();
          return json_response(candidate_detail(id, rank, query));
        }
        if (n == 6 && is(5, "tolerance")) {
          if (!post) return method_not_allowed();
          const std::string job = start_tolerance(id, rank, parse_body(body), true);
          return json_response(tolerance_record(job), 202);
        }
        if (n == 6 && !get) return method_not_allowed();
        if (n == 6 && is(5, "psf")) return candidate_psf(id, rank, query);
        if (n == 6 && is(5, "mtf")) return json_response(candidate_mtf(id, rank, query));
        if (n == 6 && is(5, "calibration")) return json_response(candidate_calibration(id, rank, query));
      }
    }
    throw NotFound("no route " + std::string(path));
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

}  // namespace lf
