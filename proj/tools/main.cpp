#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "lensfactory/api.hpp"
#include "server.hpp"

using namespace lf;

namespace {

int print(const ApiResponse& r) {
  std::cout << r.body;
  return r.status < 400 ? 0 : 1;
}

int print_error(const std::exception& e) { return print(error_response(e)); }

std::string run_path(const std::string& id) { return "/api/runs/" + id; }

std::string candidate_path(const std::string& id, std::size_t rank) {
  return run_path(id) + "/candidates/" + std::to_string(rank);
}

template <class T>
void set_if(Json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

struct DesignFlags {
  std::string request_file;
  std::optional<std::uint64_t> seed;
  std::optional<double> fov, f_number, object_distance, object_tilt, flange_min, flange_max, max_length, max_cost,
      pixel_pitch, sensor_width, sensor_height;
  std::optional<int> max_elements, iterations, max_iterations;
  std::optional<std::string> strategy, merit_mode, seed_form, catalog;
  std::optional<std::size_t> budget, pool_size, workers;
  std::optional<std::uint64_t> synthetic_seed;
  bool single_stage = false;

  void add(CLI::App* app) {
    app->add_option("--request", request_file, "Run request JSON; flags override its fields");
    app->add_option("--seed", seed, "Evolution seed")->required();
    app->add_option("--fov", fov, "Full diagonal field of view, degrees");
    app->add_option("--f-number", f_number);
    app->add_option("--object-distance", object_distance, "mm; 0 for infinity");
    app->add_option("--object-tilt", object_tilt, "degrees");
    app->add_option("--flange-min", flange_min, "mm");
    app->add_option("--flange-max", flange_max, "mm");
    app->add_option("--max-elements", max_elements);
    app->add_option("--max-length", max_length, "mm");
    app->add_option("--max-cost", max_cost);
    app->add_option("--pixel-pitch", pixel_pitch, "um");
    app->add_option("--sensor-width", sensor_width, "mm");
    app->add_option("--sensor-height", sensor_height, "mm");
    app->add_option("--strategy", strategy, "random, greedy, pool or pool_swap");
    app->add_option("--budget", budget, "Optimization runs per iteration");
    app->add_option("--pool-size", pool_size);
    app->add_option("--iterations", iterations);
    app->add_option("--max-iterations", max_iterations, "Continuous optimizer iterations");
    app->add_option("--merit", merit_mode, "Stage-1 statistic: spot or opd");
    app->add_option("--seed-form", seed_form, "singlet, triplet or double_gauss");
    app->add_option("--catalog", catalog, "Catalog CSV; default is the synthetic catalog");
    app->add_option("--synthetic-seed", synthetic_seed);
    app->add_option("--workers", workers);
    app->add_flag("--single-stage", single_stage, "Skip the MTF stage");
  }

  Json request() const {
    Json j = request_file.empty() ? Json::object() : read_json_file(request_file);
    Json& spec = j["spec"];
    if (spec.is_null()) spec = Json::object();
    set_if(spec, "fov", fov);
    set_if(spec, "f_number", f_number);
    set_if(spec, "object_distance", object_distance);
    set_if(spec, "object_tilt", object_tilt);
    set_if(spec, "max_elements", max_elements);
    set_if(spec, "max_length", max_length);
    set_if(spec, "max_cost", max_cost);
    set_if(spec, "pixel_pitch_um", pixel_pitch);
    set_if(spec, "stage1_mode", merit_mode);
    if (flange_min || flange_max) {
      const DesignSpec current = spec_from_json(spec);
      spec["flange_range"] = {flange_min.value_or(current.flange_min), flange_max.value_or(current.flange_max)};
    }
    if (sensor_width || sensor_height) {
      Json& s = spec["sensor"];
      if (s.is_null()) s = Json::object();
      set_if(s, "width", sensor_width);
      set_if(s, "height", sensor_height);
    }
    Json& evo = j["evolution"];
    if (evo.is_null()) evo = Json::object();
    evo["seed"] = *seed;
    set_if(evo, "strategy", strategy);
    set_if(evo, "budget", budget);
    set_if(evo, "pool_size", pool_size);
    set_if(j, "iterations", iterations);
    set_if(j, "max_iterations", max_iterations);
    set_if(j, "seed_form", seed_form);
    set_if(j, "workers", workers);
    if (single_stage) j["two_stage"] = false;
    if (catalog) j["catalog"] = {{"path", *catalog}};
    if (synthetic_seed) j["catalog"] = {{"synthetic_seed", *synthetic_seed}};
    return j;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lens design from stock catalog elements"};
  app.require_subcommand(1);
  std::string root = "lensfactory-data";
  app.add_option("--root", root, "Data directory for runs and tolerance jobs");

  // catalog
  auto* catalog_cmd = app.add_subcommand("catalog", "Catalog files");
  catalog_cmd->require_subcommand(1);
  auto* gen = catalog_cmd->add_subcommand("gen", "Write the synthetic catalog as CSV");
  std::uint64_t gen_seed = 7;
  std::optional<int> gen_positive, gen_negative;
  std::string gen_out;
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--positive", gen_positive, "Positive element count");
  gen->add_option("--negative", gen_negative, "Negative element count");
  gen->add_option("-o,--out", gen_out, "Output file; stdout when omitted");
  auto* validate_cmd = catalog_cmd->add_subcommand("validate", "Parse a catalog CSV and summarize it");
  std::string validate_file;
  validate_cmd->add_option("file", validate_file)->required();

  // design
  auto* design = app.add_subcommand("design", "Design runs");
  design->require_subcommand(1);
  auto* run = design->add_subcommand("run", "Create a run and execute it to completion");
  DesignFlags flags;
  flags.add(run);
  auto* resume = design->add_subcommand("resume", "Continue an interrupted run from its last snapshot");
  std::string resume_id;
  resume->add_option("id", resume_id)->required();
  auto* status = design->add_subcommand("status", "Show a run record");
  std::string status_id;
  status->add_option("id", status_id)->required();

  // candidate
  auto* candidate = app.add_subcommand("candidate", "Inspect pool candidates");
  candidate->require_subcommand(1);
  std::string cand_id;
  std::size_t cand_rank = 0;
  std::optional<int> cand_iteration, cand_field, cand_channel, cand_density;
  std::optional<std::string> cand_format;
  auto add_candidate = [&](const char* name, const char* help) {
    auto* c = candidate->add_subcommand(name, help);
    c->add_option("id", cand_id)->required();
    c->add_option("rank", cand_rank, "0 is the best")->required();
    c->add_option("--iteration", cand_iteration, "Snapshot iteration; default is the last");
    return c;
  };
  add_candidate("show", "System, report, PSFs, MTFs and optimization trace");
  auto* psf = add_candidate("psf", "PSF of one field and channel");
  psf->add_option("--field", cand_field);
  psf->add_option("--channel", cand_channel);
  psf->add_option("--format", cand_format, "json or text");
  auto* mtf = add_candidate("mtf", "MTF of one field and channel");
  mtf->add_option("--field", cand_field);
  mtf->add_option("--channel", cand_channel);
  auto* calib = add_candidate("calib", "Distortion and lateral color calibration table");
  calib->add_option("--density", cand_density, "Grid points per side");

  // tolerance
  auto* tolerance = app.add_subcommand("tolerance", "Monte Carlo tolerance analysis");
  tolerance->require_subcommand(1);
  auto* tol_run = tolerance->add_subcommand("run", "Analyze a candidate");
  std::string tol_id;
  std::size_t tol_rank = 0;
  std::string tol_config;
  std::optional<std::size_t> tol_runs, tol_workers;
  std::optional<std::uint64_t> tol_seed;
  bool tol_raw = false;
  tol_run->add_option("id", tol_id)->required();
  tol_run->add_option("rank", tol_rank)->required();
  tol_run->add_option("--config", tol_config, "Tolerance config JSON");
  tol_run->add_option("--runs", tol_runs);
  tol_run->add_option("--seed", tol_seed);
  tol_run->add_option("--workers", tol_workers);
  tol_run->add_flag("--keep-raw", tol_raw, "Also write per-run scores");
  auto* tol_status = tolerance->add_subcommand("status", "Show a tolerance job");
  std::string tol_job;
  tol_status->add_option("job", tol_job)->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*catalog_cmd) {
      if (*gen) {
        SyntheticCounts counts;
        if (gen_positive || gen_negative)
          counts = SyntheticCounts::with_totals(gen_positive.value_or(counts.positive()),
                                                gen_negative.value_or(counts.negative()));
        const std::string csv = to_catalog_csv(generate_synthetic_rows(gen_seed, counts));
        if (gen_out.empty())
          std::cout << csv;
        else
          write_file_atomic(gen_out, csv);
        return 0;
      }
      const Catalog c = load_catalog(validate_file);
      std::cout << dump({{"schema_version", kSchemaVersion},
                         {"file", validate_file},
                         {"elements", c.size()},
                         {"positive", c.positive_count()},
                         {"negative", c.negative_count()}});
      return 0;
    }

    Api api(root);
    if (*design) {
      if (*run) {
        const std::string id = api.runs().create(run_request_from_json(flags.request()));
        api.runs().execute(id);
        return print(api.handle("GET", run_path(id)));
      }
      if (*resume) {
        api.runs().execute(resume_id);
        return print(api.handle("GET", run_path(resume_id)));
      }
      return print(api.handle("GET", run_path(status_id)));
    }
    if (*candidate) {
      Query q;
      if (cand_iteration) q["iteration"] = std::to_string(*cand_iteration);
      if (cand_field) q["field"] = std::to_string(*cand_field);
      if (cand_channel) q["channel"] = std::to_string(*cand_channel);
      if (cand_density) q["density"] = std::to_string(*cand_density);
      if (cand_format) q["format"] = *cand_format;
      std::string path = candidate_path(cand_id, cand_rank);
      if (*psf) path += "/psf";
      if (*mtf) path += "/mtf";
      if (*calib) path += "/calibration";
      return print(api.handle("GET", path, q));
    }
    if (*tolerance) {
      if (*tol_run) {
        Json config = tol_config.empty() ? Json::object() : read_json_file(tol_config);
        set_if(config, "runs", tol_runs);
        set_if(config, "seed", tol_seed);
        set_if(config, "workers", tol_workers);
        if (tol_raw) config["keep_raw"] = true;
        const std::string job = api.start_tolerance(tol_id, tol_rank, config, false);
        return print(api.handle("GET", "/api/tolerance/" + job));
      }
      return print(api.handle("GET", "/api/tolerance/" + tol_job));
    }
    if (*serve_cmd) serve(api, host, port);
  } catch (const std::exception& e) {
    return print_error(e);
  }
  return 0;
}
