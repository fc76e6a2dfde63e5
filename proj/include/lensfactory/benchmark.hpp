#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "lensfactory/run.hpp"

namespace lf {

/// Strategy comparison: every strategy evolves the same seed pool for each seed.
struct Benchmark {
  RunRequest request;  // evolution.seed and strategy are overridden per cell
  std::vector<Strategy> strategies;
  int seeds = 11;
};

/// A relative catalog path resolves against the benchmark file's directory.
Benchmark load_benchmark(const std::filesystem::path& path);

struct BenchmarkResult {
  std::vector<Strategy> strategies;
  std::vector<std::vector<double>> best;  // [seed][strategy] best pool score after the last iteration

  std::vector<double> medians() const;
};

using BenchmarkProgress = std::function<void(int seed, std::span<const double> best)>;

BenchmarkResult run_benchmark(const Benchmark& benchmark, const Catalog& catalog,
                              const BenchmarkProgress& progress = {});

}  // namespace lf
