#include "lensfactory/benchmark.hpp"

#include <algorithm>

namespace lf {

Benchmark load_benchmark(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  Json request = j.at("request");
  if (auto it = request.find("catalog"); it != request.end() && it->contains("path")) {
    const std::filesystem::path p = it->at("path").get<std::string>();
    if (p.is_relative()) (*it)["path"] = (path.parent_path() / p).string();
  }
  Benchmark b;
  b.request = run_request_from_json(request);
  b.request.validate();
  for (const auto& s : j.at("strategies")) {
    const auto strategy = parse_strategy(s.get<std::string>());
    if (!strategy) throw ValidationError("benchmark: unknown strategy " + s.get<std::string>());
    b.strategies.push_back(*strategy);
  }
  b.seeds = j.value("seeds", 11);
  if (b.seeds < 1 || b.strategies.empty()) throw ValidationError("benchmark: needs seeds and strategies");
  return b;
}

std::vector<double> BenchmarkResult::medians() const {
  std::vector<double> out;
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    std::vector<double> v;
    for (const auto& row : best) v.push_back(row[s]);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out.push_back(n == 0 ? 0.0 : n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  }
  return out;
}

BenchmarkResult run_benchmark(const Benchmark& benchmark, const Catalog& catalog, const BenchmarkProgress& progress) {
  const RunRequest& req = benchmark.request;
  const SeedForm form = seed_preset(req.seed_form, req.spec);
  EvaluationOptions options = req.evaluation_options();
  options.keep_trace = false;

  BenchmarkResult result;
  result.strategies = benchmark.strategies;
  for (int seed = 0; seed < benchmark.seeds; ++seed) {
    const CandidateEvaluator evaluator(req.spec, options);
    EvolutionConfig config = req.evolution;
    config.seed = static_cast<std::uint64_t>(seed);
    const CandidatePool start = seed_pool(catalog, evaluator, form, config);
    std::vector<double> row;
    for (Strategy s : benchmark.strategies) {
      config.strategy = s;
      CandidatePool pool = start;
      while (pool.iteration < req.iterations) pool = evolve(pool, catalog, evaluator, config);
      row.push_back(pool.empty() ? 0.0 : pool.best().score());
    }
    if (progress) progress(seed, row);
    result.best.push_back(std::move(row));
  }
  return result;
}

}  // namespace lf
