#include <gtest/gtest.h>
#include <httplib.h>

#include <array>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "lensfactory/api.hpp"
#include "lensfactory/benchmark.hpp"

namespace lf {
namespace {

namespace fs = std::filesystem;

struct Output {
  std::string text;
  int exit_code = 0;
};

Output run_cli(const std::string& args) {
  const std::string cmd = std::string(LF_CLI) + " " + args + " 2>/dev/null";
  Output out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {"", -1};
  std::array<char, 4096> buf{};
  for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0;) out.text.append(buf.data(), n);
  const int status = ::pclose(pipe);
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

class ApiFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("lf_api_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    Api api(root_);
    RunRequest r = load_benchmark(LF_DATA_DIR "/toy_benchmark.json").request;
    r.evolution.seed = 2;
    r.evolution.budget = 40;
    r.evolution.pool_size = 20;
    r.iterations = 1;
    run_ = api.runs().create(r);
    api.runs().execute(run_);
    ToleranceConfig t;
    t.runs = 20;
    t.seed = 3;
    job_ = api.start_tolerance(run_, 0, to_json(t), false);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  std::string cli(const std::string& args) const { return "--root " + root_.string() + " " + args; }

  static fs::path root_;
  static std::string run_;
  static std::string job_;
};

fs::path ApiFixture::root_;
std::string ApiFixture::run_;
std::string ApiFixture::job_;

TEST_F(ApiFixture, EveryBodyIsVersioned) {
  Api api(root_);
  for (const std::string path : std::vector<std::string>{"/api/runs", "/api/runs/" + run_, "/api/runs/" + run_ + "/candidates",
                                 "/api/runs/" + run_ + "/candidates/0/mtf", "/api/tolerance/" + job_,
                                 "/api/runs/nope", "/api/nothing"}) {
    const ApiResponse r = api.handle("GET", path);
    EXPECT_EQ(Json::parse(r.body).at("schema_version"), kSchemaVersion) << path;
  }
}

TEST_F(ApiFixture, StatusCodes) {
  Api api(root_);
  EXPECT_EQ(api.handle("GET", "/api/runs/run-9999").status, 404);
  EXPECT_EQ(api.handle("GET", "/api/runs/" + run_ + "/candidates/999").status, 404);
  EXPECT_EQ(api.handle("GET", "/api/runs/" + run_ + "/candidates/x").status, 400);
  EXPECT_EQ(api.handle("GET", "/api/runs/" + run_ + "/candidates/0/psf", {{"field", "17"}}).status, 400);
  EXPECT_EQ(api.handle("POST", "/api/runs/" + run_ + "/cancel").status, 409);
  EXPECT_EQ(api.handle("DELETE", "/api/runs/" + run_).status, 405);
  EXPECT_EQ(api.handle("POST", "/api/runs", {}, "{not json").status, 400);
  EXPECT_EQ(api.handle("POST", "/api/runs", {}, R"({"evolution": {}})").status, 400);
  EXPECT_EQ(api.handle("GET", "/api/tolerance/tol-9999").status, 404);
}

TEST_F(ApiFixture, SpecValidationReturnsDiagnosticsAndSketch) {
  Api api(root_);
  const Json ok = Json::parse(api.handle("POST", "/api/spec/validate", {}, R"({"fov": 40})").body);
  EXPECT_NEAR(ok.at("sketch").at("efl").get<double>(), 30.0, 1.5);
  const Json bad = Json::parse(api.handle("POST", "/api/spec/validate", {}, R"({"f_number": 0})").body);
  EXPECT_TRUE(bad.at("sketch").is_null());
  EXPECT_EQ(bad.at("diagnostics")[0].at("severity"), "error");
}

TEST_F(ApiFixture, CandidateDetailCarriesEverything) {
  Api api(root_);
  const Json d = Json::parse(api.handle("GET", "/api/runs/" + run_ + "/candidates/0").body);
  for (const char* key : {"candidate", "elements", "paraxial", "psf", "mtf", "trace"})
    EXPECT_TRUE(d.contains(key)) << key;
  const std::size_t pairs = d.at("candidate").at("report").at("pairs").size();
  EXPECT_EQ(d.at("psf").size(), pairs);
  EXPECT_EQ(d.at("mtf").size(), pairs);
  EXPECT_FALSE(d.at("trace").empty());
  const Json list = Json::parse(api.handle("GET", "/api/runs/" + run_ + "/candidates").body);
  EXPECT_EQ(list.at("candidates")[0].at("key"), d.at("candidate").at("key"));
}

TEST_F(ApiFixture, ToleranceJobRecord) {
  Api api(root_);
  const Json j = Json::parse(api.handle("GET", "/api/tolerance/" + job_).body);
  EXPECT_EQ(j.at("status"), "done");
  EXPECT_EQ(j.at("report").at("runs"), 20);
  EXPECT_EQ(j.at("run"), run_);
}

TEST_F(ApiFixture, CliOutputMatchesApiBodies) {
  Api api(root_);
  const std::string base = "/api/runs/" + run_;
  struct Case {
    std::string args;
    std::string path;
    Query query;
  };
  const std::vector<Case> cases = {
      {"design status " + run_, base, {}},
      {"candidate show " + run_ + " 1", base + "/candidates/1", {}},
      {"candidate psf " + run_ + " 0 --field 2 --channel 1", base + "/candidates/0/psf", {{"field", "2"}, {"channel", "1"}}},
      {"candidate psf " + run_ + " 0 --format text", base + "/candidates/0/psf", {{"format", "text"}}},
      {"candidate mtf " + run_ + " 0 --field 1 --iteration 0", base + "/candidates/0/mtf",
       {{"field", "1"}, {"iteration", "0"}}},
      {"candidate calib " + run_ + " 0 --density 5", base + "/candidates/0/calibration", {{"density", "5"}}},
      {"tolerance status " + job_, "/api/tolerance/" + job_, {}},
      {"design status run-9999", "/api/runs/run-9999", {}},
      {"candidate show " + run_ + " 500", base + "/candidates/500", {}},
  };
  for (const auto& c : cases) {
    const ApiResponse expected = api.handle("GET", c.path, c.query);
    const Output got = run_cli(cli(c.args));
    EXPECT_EQ(got.text, expected.body) << c.args;
    EXPECT_EQ(got.exit_code, expected.status < 400 ? 0 : 1) << c.args;
  }
}

TEST_F(ApiFixture, CliRunAndToleranceMatchTheirRecords) {
  const fs::path request = root_ / "request.json";
  write_file_atomic(request, dump(to_json(load_benchmark(LF_DATA_DIR "/toy_benchmark.json").request)));
  const Output run =
      run_cli(cli("design run --request " + request.string() + " --seed 4 --budget 30 --pool-size 10 --iterations 1"));
  ASSERT_EQ(run.exit_code, 0) << run.text;
  const Json rec = Json::parse(run.text);
  EXPECT_EQ(rec.at("status"), "done");
  Api api(root_);
  const std::string id = rec.at("id");
  EXPECT_EQ(run.text, api.handle("GET", "/api/runs/" + id).body);

  const Output tol = run_cli(cli("tolerance run " + id + " 0 --runs 10 --seed 1"));
  ASSERT_EQ(tol.exit_code, 0) << tol.text;
  const std::string job = Json::parse(tol.text).at("id");
  EXPECT_EQ(tol.text, api.handle("GET", "/api/tolerance/" + job).body);
}

TEST_F(ApiFixture, CliRequiresSeedForRuns) {
  const Output out = run_cli(cli("design run --iterations 1"));
  EXPECT_NE(out.exit_code, 0);
}

TEST_F(ApiFixture, CliRejectsRequestsWithUnknownKeys) {
  const Output out = run_cli(cli("design run --request " LF_DATA_DIR "/toy_benchmark.json --seed 1"));
  EXPECT_EQ(out.exit_code, 1);
  EXPECT_EQ(Json::parse(out.text).at("error").at("type"), "validation");
}

TEST_F(ApiFixture, CatalogCommands) {
  const Output gen = run_cli("catalog gen --seed 7");
  EXPECT_EQ(gen.exit_code, 0);
  EXPECT_EQ(gen.text, to_catalog_csv(generate_synthetic_rows(7, {})));
  const Output ok = run_cli("catalog validate " LF_DATA_DIR "/catalog_synthetic.csv");
  EXPECT_EQ(ok.exit_code, 0);
  EXPECT_EQ(Json::parse(ok.text).at("elements"), 885);
  const Output bad = run_cli("catalog validate " LF_DATA_DIR "/toy_benchmark.json");
  EXPECT_EQ(bad.exit_code, 1);
  EXPECT_EQ(Json::parse(bad.text).at("error").at("type"), "validation");
}

class Server {
 public:
  Server(const fs::path& root, int port) {
    pid_ = ::fork();
    if (pid_ == 0) {
      const std::string r = root.string(), p = std::to_string(port);
      ::execl(LF_CLI, LF_CLI, "--root", r.c_str(), "serve", "--port", p.c_str(), static_cast<char*>(nullptr));
      std::_Exit(127);
    }
  }
  ~Server() {
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, nullptr, 0);
    }
  }

 private:
  pid_t pid_ = -1;
};

TEST_F(ApiFixture, HttpServesTheSameBodies) {
  const int port = 20000 + ::getpid() % 20000;
  Server server(root_, port);
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(120, 0);
  for (int i = 0; i < 200 && !client.Get("/api/runs"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(25));

  Api api(root_);
  const std::string base = "/api/runs/" + run_;
  for (const std::string path : std::vector<std::string>{"/api/runs", base, base + "/candidates", "/api/tolerance/" + job_,
                                 std::string("/api/runs/run-9999")}) {
    const auto res = client.Get(path);
    ASSERT_TRUE(res) << path;
    const ApiResponse expected = api.handle("GET", path);
    EXPECT_EQ(res->status, expected.status) << path;
    EXPECT_EQ(res->body, expected.body) << path;
  }
  const auto mtf = client.Get(base + "/candidates/0/mtf?field=2&channel=0");
  ASSERT_TRUE(mtf);
  EXPECT_EQ(mtf->body, api.handle("GET", base + "/candidates/0/mtf", {{"field", "2"}, {"channel", "0"}}).body);

  const auto events = client.Get(base + "/events?follow=1");
  ASSERT_TRUE(events);
  EXPECT_EQ(events->body, api.runs().events(run_));

  const auto cancel = client.Post(base + "/cancel", "", "application/json");
  ASSERT_TRUE(cancel);
  EXPECT_EQ(cancel->status, 409);

  const auto validate = client.Post("/api/spec/validate", R"({"fov": 40})", "application/json");
  ASSERT_TRUE(validate);
  EXPECT_EQ(validate->status, 200);

  Json request = to_json(load_benchmark(LF_DATA_DIR "/toy_benchmark.json").request);
  request["evolution"]["seed"] = 8;
  request["evolution"]["budget"] = 20;
  request["evolution"]["pool_size"] = 10;
  request["iterations"] = 1;
  const auto created = client.Post("/api/runs", request.dump(), "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string id = Json::parse(created->body).at("id");
  const auto stream = client.Get("/api/runs/" + id + "/events?follow=1");
  ASSERT_TRUE(stream);
  EXPECT_EQ(Json::parse(client.Get("/api/runs/" + id)->body).at("status"), "done");
  EXPECT_EQ(stream->body, api.runs().events(id));

  const auto tol = client.Post(base + "/candidates/0/tolerance", R"({"runs": 8, "seed": 2})", "application/json");
  ASSERT_TRUE(tol);
  EXPECT_EQ(tol->status, 202);
  const std::string job = Json::parse(tol->body).at("id");
  Json rec;
  for (int i = 0; i < 400; ++i) {
    rec = Json::parse(client.Get("/api/tolerance/" + job)->body);
    if (rec.at("status") == "done") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  EXPECT_EQ(rec.at("status"), "done");
}

}  // namespace
}  // namespace lf
