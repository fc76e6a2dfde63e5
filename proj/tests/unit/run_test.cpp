#include <gtest/gtest.h>

#include <chrono>
#include <csignal>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "lensfactory/benchmark.hpp"
#include "lensfactory/run.hpp"

namespace lf {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lf_run_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunRequest small_request(std::uint64_t seed = 5) {
  RunRequest r = load_benchmark(LF_DATA_DIR "/toy_benchmark.json").request;
  r.evolution.seed = seed;
  r.evolution.budget = 40;
  r.evolution.pool_size = 20;
  r.iterations = 2;
  return r;
}

void expect_same_snapshots(const RunManager& a, const std::string& ida, const RunManager& b, const std::string& idb) {
  const auto its = a.snapshot_iterations(ida);
  ASSERT_EQ(its, b.snapshot_iterations(idb));
  for (int it : its) EXPECT_EQ(slurp(a.snapshot_path(ida, it)), slurp(b.snapshot_path(idb, it))) << "iteration " << it;
}

TEST(RunRequest, JsonRoundTrip) {
  const RunRequest r = small_request(11);
  const Json j = to_json(r);
  EXPECT_EQ(to_json(run_request_from_json(j)), j);
}

TEST(RunRequest, SeedIsRequired) {
  Json j = to_json(small_request());
  j["evolution"].erase("seed");
  EXPECT_THROW(run_request_from_json(j), ValidationError);
}

TEST(RunRequest, InvalidSpecIsRejectedAtCreate) {
  RunManager runs(fresh_dir("invalid"));
  RunRequest r = small_request();
  r.spec.f_number = 0;
  EXPECT_THROW(runs.create(r), ValidationError);
  EXPECT_TRUE(runs.ids().empty());
}

TEST(RunManager, StatusGoesQueuedRunningDone) {
  RunManager runs(fresh_dir("status"));
  const std::string id = runs.create(small_request());
  EXPECT_EQ(runs.status(id), RunStatus::Queued);
  runs.execute(id);
  EXPECT_EQ(runs.status(id), RunStatus::Done);
  const Json rec = runs.record(id);
  ASSERT_EQ(rec.at("history").size(), 3u);
  EXPECT_EQ(rec.at("history")[0].at("status"), "queued");
  EXPECT_EQ(rec.at("history")[1].at("status"), "running");
  EXPECT_EQ(rec.at("history")[2].at("status"), "done");
  EXPECT_EQ(rec.at("schema_version"), kSchemaVersion);
  EXPECT_EQ(runs.snapshot_iterations(id), (std::vector<int>{0, 1, 2}));
  EXPECT_FALSE(rec.at("best").empty());
}

TEST(RunManager, CancelOnDoneRunIsAnInvalidTransition) {
  RunManager runs(fresh_dir("cancel_done"));
  const std::string id = runs.create(small_request());
  runs.execute(id);
  EXPECT_THROW(runs.cancel(id), InvalidTransition);
  EXPECT_THROW(runs.execute(id), InvalidTransition);
  EXPECT_THROW(runs.resume_async(id), InvalidTransition);
  EXPECT_EQ(runs.status(id), RunStatus::Done);
}

TEST(RunManager, UnknownRunIsNotFound) {
  RunManager runs(fresh_dir("unknown"));
  EXPECT_THROW(runs.status("run-0042"), NotFound);
  EXPECT_THROW(runs.cancel("run-0042"), NotFound);
  EXPECT_THROW(runs.record("../x"), NotFound);
}

TEST(RunManager, CancelStopsABackgroundRun) {
  RunManager runs(fresh_dir("cancel_running"));
  RunRequest r = small_request();
  r.iterations = 50;
  const std::string id = runs.start(r);
  while (runs.status(id) == RunStatus::Queued) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  runs.cancel(id);
  runs.wait(id);
  EXPECT_EQ(runs.status(id), RunStatus::Cancelled);
  EXPECT_LT(runs.snapshot_iterations(id).size(), 50u);
  EXPECT_THROW(runs.cancel(id), InvalidTransition);
}

TEST(RunManager, CancelOfQueuedRunIsImmediate) {
  RunManager runs(fresh_dir("cancel_queued"));
  const std::string id = runs.create(small_request());
  runs.cancel(id);
  EXPECT_EQ(runs.status(id), RunStatus::Cancelled);
  EXPECT_THROW(runs.execute(id), InvalidTransition);
}

TEST(RunManager, IdenticalStartsGiveByteIdenticalSnapshots) {
  RunManager runs(fresh_dir("identical"));
  const std::string a = runs.start(small_request(9));
  const std::string b = runs.start(small_request(9));
  runs.wait(a);
  runs.wait(b);
  EXPECT_NE(a, b);
  expect_same_snapshots(runs, a, runs, b);
  EXPECT_EQ(runs.events(a), runs.events(b));
}

TEST(RunManager, SnapshotsDoNotDependOnWorkerCount) {
  RunManager runs(fresh_dir("workers"));
  RunRequest one = small_request(4);
  RunRequest three = one;
  three.workers = 3;
  const std::string a = runs.create(one);
  const std::string b = runs.create(three);
  runs.execute(a);
  runs.execute(b);
  expect_same_snapshots(runs, a, runs, b);
}

TEST(RunManager, DifferentSeedsDiverge) {
  RunManager runs(fresh_dir("seeds"));
  const std::string a = runs.create(small_request(1));
  const std::string b = runs.create(small_request(2));
  runs.execute(a);
  runs.execute(b);
  EXPECT_NE(slurp(runs.snapshot_path(a, 2)), slurp(runs.snapshot_path(b, 2)));
}

TEST(RunManager, ResumeAfterKillReproducesTheNextIteration) {
  const fs::path root = fresh_dir("crash");
  RunManager runs(root);
  const RunRequest req = small_request(13);
  const std::string reference = runs.create(req);
  runs.execute(reference);

  const std::string id = runs.create(req);
  const pid_t child = ::fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    RunManager(root).execute(id);
    std::_Exit(0);
  }
  const fs::path first = runs.snapshot_path(id, 1);
  while (!fs::exists(first)) std::this_thread::sleep_for(std::chrono::milliseconds(2));
  ::kill(child, SIGKILL);
  int wstatus = 0;
  ::waitpid(child, &wstatus, 0);
  ASSERT_TRUE(WIFSIGNALED(wstatus)) << "the run finished before it could be killed";
  ASSERT_FALSE(fs::exists(runs.snapshot_path(id, 2)));
  EXPECT_EQ(runs.status(id), RunStatus::Running);

  runs.execute(id);
  EXPECT_EQ(runs.status(id), RunStatus::Done);
  expect_same_snapshots(runs, reference, runs, id);
  EXPECT_EQ(runs.events(reference), runs.events(id));
  const Json rec = runs.record(id);
  EXPECT_EQ(rec.at("history")[2].at("message"), "resumed after iteration 1");
}

TEST(RunManager, ToyBenchmarkRunFinishesWithCandidates) {
  RunManager runs(fresh_dir("toy"));
  RunRequest r = load_benchmark(LF_DATA_DIR "/toy_benchmark.json").request;
  r.evolution.seed = 0;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string id = runs.start(r);
  runs.wait(id);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(runs.status(id), RunStatus::Done);
  const Catalog catalog = r.catalog.load();
  EXPECT_GE(runs.latest_pool(id, catalog).candidates.size(), 1u);
  EXPECT_LT(seconds, 600.0);
}

}  // namespace
}  // namespace lf
