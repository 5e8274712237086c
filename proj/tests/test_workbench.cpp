#include <gtest/gtest.h>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "medrl/common.hpp"
#include "medrl/json_io.hpp"
#include "medrl/model_client.hpp"
#include "medrl/model_scorer.hpp"
#include "medrl/run_config.hpp"
#include "medrl/workbench.hpp"

#include <httplib.h>

using namespace medrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("medrl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Local OpenAI-style chat endpoint.
class FakeChat {
 public:
  explicit FakeChat(std::string reply, int status = 200) : reply_(std::move(reply)), status_(status) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      res.status = status_;
      res.set_content(json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", reply_}}}}})}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChat() {
    server_.stop();
    thread_.join();
  }
  ChatEndpoint endpoint() const {
    ChatEndpoint e;
    e.base_url = "http://127.0.0.1:" + std::to_string(port_);
    e.model = "judge-model";
    e.api_key_env = "MEDRL_TEST_TOKEN";
    e.timeout_ms = 2000;
    e.max_retries = 1;
    return e;
  }

  std::atomic<int> hits{0};
  std::string last_body;
  std::string last_auth;

 private:
  httplib::Server server_;
  std::string reply_;
  int status_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(HttpWire, ScorerRequestShapeAndAveraging) {
  ::setenv("MEDRL_TEST_TOKEN", "sekret", 1);
  FakeChat server("Score: 90");
  HttpScorerConfig cfg;
  cfg.endpoint = server.endpoint();
  auto scorer = std::make_shared<HttpModelScorer>(cfg);
  EXPECT_NEAR(scorer->score("q", "r", DrugGold{{"metformin"}}), 0.9, 1e-12);
  const auto body = json::parse(server.last_body);
  EXPECT_EQ(body.at("model"), "judge-model");
  EXPECT_EQ(body.at("messages").at(0).at("role"), "user");
  EXPECT_TRUE(body.at("temperature").is_number());
  EXPECT_EQ(server.last_auth, "Bearer sekret");

  const int before = server.hits;
  Verifier v({}, scorer);
  const auto b = v.score("q", "{\"drugs\":[\"metformin\"]}", DrugGold{{"metformin", "insulin"}});
  EXPECT_EQ(server.hits - before, 8);
  EXPECT_NEAR(b.content, 0.9, 1e-12);
}

TEST(HttpWire, ServerErrorDegradesVerifier) {
  FakeChat server("0.5", 500);
  HttpScorerConfig cfg;
  cfg.endpoint = server.endpoint();
  Verifier v({}, std::make_shared<HttpModelScorer>(cfg));
  const auto b = v.score("q", "{\"drugs\":[\"metformin\"]}", DrugGold{{"metformin", "insulin"}});
  EXPECT_TRUE(b.degraded);
  EXPECT_EQ(b.content, 0.5);
}

TEST(HttpWire, ChatClientReturnsContent) {
  FakeChat server("{\"answer\":\"B\"}");
  eval::HttpChatClient client(server.endpoint());
  EXPECT_EQ(client.complete("hello", 0.6), "{\"answer\":\"B\"}");
  EXPECT_NEAR(json::parse(server.last_body).at("temperature").get<double>(), 0.6, 1e-12);
}

TEST(HttpWire, UnreachableEndpointThrows) {
  ChatEndpoint e;
  e.base_url = "http://127.0.0.1:1";
  e.timeout_ms = 200;
  e.max_retries = 0;
  eval::HttpChatClient client(e);
  EXPECT_THROW(client.complete("x", 0.0), eval::ClientError);
}

TEST(RunConfig, DefaultsAndRoundTrip) {
  const auto c = default_run_config();
  EXPECT_EQ(c.train.group_size, 8);
  EXPECT_EQ(c.train.kl_coef, 0.01);
  EXPECT_EQ(c.verifier.format_weight, 0.2);
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(RunConfig, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW(run_config_from_json(json{{"sed", 1}}), std::invalid_argument);
  EXPECT_THROW(run_config_from_json(json{{"train", {{"kl", 0.1}}}}), std::invalid_argument);
  EXPECT_THROW(run_config_from_json(json{{"eval", {{"client", {{"kind", "mock"}, {"urll", "x"}}}}}}),
               std::invalid_argument);
}

TEST(RunConfig, ValidatedBeforeUse) {
  EXPECT_THROW(run_config_from_json(json{{"train", {{"group_size", 1}}}}), std::invalid_argument);
  EXPECT_THROW(run_config_from_json(json{{"scorer", {{"enabled", true}}}}), std::invalid_argument);
  EXPECT_THROW(run_config_from_json(json{{"eval", {{"client", {{"kind", "carrier-pigeon"}}}}}}),
               std::invalid_argument);
}

TEST(RunConfig, CommentsAllowedInFile) {
  const auto dir = scratch("cfg");
  write_file((dir / "c.json").string(), "{\n  // seed\n  \"seed\": 11, /* block */ \"parallelism\": 2\n}\n");
  const auto c = load_run_config((dir / "c.json").string());
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.parallelism, 2);
}

TEST(RunConfig, ShippedExampleLoads) {
  const auto c = load_run_config(MEDRL_SOURCE_DIR "/configs/example.jsonc");
  EXPECT_EQ(c.seed, 7u);
}

TEST(Workbench, SyntheticObjective) {
  const auto f = workbench::synthetic_objective({0.4, 0.3, 0.2, 0.1});
  EXPECT_EQ(f({0.4, 0.3, 0.2, 0.1}), 0.0);
  EXPECT_NEAR(f({0.25, 0.25, 0.25, 0.25}), -(0.0225 + 0.0025 + 0.0025 + 0.0225), 1e-15);
}

TEST(Workbench, ReportHashFormat) {
  const auto h = workbench::report_hash("abc");
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, workbench::report_hash("abc"));
  EXPECT_NE(h, workbench::report_hash("abd"));
}

TEST(Workbench, StageFailurePersistsPartialArtifacts) {
  const auto dir = scratch("failed_demo");
  RunConfig c = default_run_config();
  c.paths.triples = (dir / "missing.tsv").string();
  c.parallelism = 1;
  try {
    workbench::run_demo(c, (dir / "run").string());
    FAIL() << "expected StageError";
  } catch (const workbench::StageError& e) {
    EXPECT_EQ(e.stage, "data-pipeline");
  }
  EXPECT_TRUE(fs::exists(dir / "run" / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "curriculum" / "train.jsonl"));
  const auto summary = json::parse(read_file((dir / "run" / "summary.json").string()));
  EXPECT_EQ(summary.at("failed_stage"), "data-pipeline");
  EXPECT_FALSE(fs::exists(dir / "run" / "report.md"));
}

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MEDRL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, VerifyExamples) {
  const auto dir = scratch("cli_verify");
  write_file((dir / "in.jsonl").string(),
             "{\"kind\":\"exam_question\",\"response\":\"so {\\\"answer\\\":\\\"C\\\"}\",\"gold\":\"C\"}\n"
             "{\"kind\":\"exam_question\",\"response\":\"{\\\"answer\\\": C\",\"gold\":\"C\"}\n"
             "not json\n");
  ASSERT_EQ(run_cli("--out " + (dir / "run").string() + " verify --input " + (dir / "in.jsonl").string(),
                    dir / "log.txt"),
            0);
  const auto rows = read_jsonl((dir / "run" / "verify" / "scored.jsonl").string());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].value.at("reward").at("final"), 1.0);
  EXPECT_EQ(rows[1].value.at("reward").at("format_score"), 0);
  EXPECT_LE(rows[1].value.at("reward").at("final").get<double>(), 0.8);
  EXPECT_TRUE(rows[2].value.contains("error"));
  EXPECT_NE(read_file((dir / "log.txt").string()).find("scored 2 lines, 1 errors"), std::string::npos);

  write_file((dir / "empty.jsonl").string(), "");
  ASSERT_EQ(run_cli("--out " + (dir / "run2").string() + " verify --input " + (dir / "empty.jsonl").string(),
                    dir / "log2.txt"),
            0);
  EXPECT_EQ(read_file((dir / "run2" / "verify" / "scored.jsonl").string()), "");
  EXPECT_NE(read_file((dir / "log2.txt").string()).find("scored 0 lines, 0 errors"), std::string::npos);
}

TEST(Cli, CsvOutputsDeterministicAcrossRuns) {
  const auto dir = scratch("cli_det");
  for (const char* run : {"a", "b"}) {
    const std::string out = " --seed 5 --out " + (dir / run).string();
    ASSERT_EQ(run_cli(out + " --parallelism " + (run[0] == 'a' ? "1" : "3") + " train --algo grpo --epochs 5",
                      dir / "log.txt"),
              0);
    ASSERT_EQ(run_cli(out + " optimize-ratios --tasks 4 --budget 12", dir / "log.txt"), 0);
    ASSERT_EQ(run_cli(out + " resample", dir / "log.txt"), 0);
  }
  for (const char* f : {"train_grpo/metrics.csv", "bo/trace.csv", "resample/pass_rates.csv"}) {
    EXPECT_EQ(read_file((dir / "a" / f).string()), read_file((dir / "b" / f).string())) << f;
  }
}

TEST(Cli, BadConfigRejectedBeforeWork) {
  const auto dir = scratch("cli_badcfg");
  write_file((dir / "c.json").string(), "{\"seed\": 1, \"trian\": {}}");
  EXPECT_EQ(run_cli("--config " + (dir / "c.json").string() + " --out " + (dir / "run").string() + " demo",
                    dir / "log.txt"),
            2);
  EXPECT_FALSE(fs::exists(dir / "run"));
  EXPECT_NE(read_file((dir / "log.txt").string()).find("trian"), std::string::npos);
}

TEST(Cli, EvaluateShippedFixtures) {
  const auto dir = scratch("cli_eval");
  const std::string data = MEDRL_SOURCE_DIR "/data/benchmarks/";
  for (const auto& [bench, file] : std::vector<std::pair<std::string, std::string>>{
           {"mcq", "mcq.jsonl"}, {"multi_response", "multi_response.jsonl"}, {"open_ended", "open_ended.jsonl"}}) {
    const auto run = dir / bench;
    ASSERT_EQ(run_cli("--out " + run.string() + " evaluate --benchmark " + bench + " --data " + data + file +
                          " --client mock --temperature 0.6 --cap 1000 --seed 3",
                      dir / "log.txt"),
              0)
        << read_file((dir / "log.txt").string());
    EXPECT_NE(read_file((dir / "log.txt").string()).find("overall 1.0000"), std::string::npos) << bench;
    ASSERT_EQ(run_cli("--out " + (dir / (bench + "_replay")).string() + " evaluate --benchmark " + bench + " --data " +
                          data + file + " --client replay --transcripts " + (run / "eval" / "transcripts.jsonl").string(),
                      dir / "log.txt"),
              0);
    EXPECT_EQ(read_file((run / "eval" / "report.md").string()),
              read_file((dir / (bench + "_replay") / "eval" / "report.md").string()));
  }
}

TEST(Cli, PipelineFilterReportsAdversarial) {
  const auto dir = scratch("cli_pipe");
  ASSERT_EQ(run_cli("--out " + dir.string() + " pipeline filter --triples " MEDRL_SOURCE_DIR
                    "/data/triples.tsv --templates " MEDRL_SOURCE_DIR "/data/templates.json",
                    dir / "log.txt"),
            0);
  const auto log = read_file((dir / "log.txt").string());
  EXPECT_NE(log.find("rejected [roundtrip_mismatch]"), std::string::npos);
  ASSERT_EQ(run_cli("--out " + dir.string() + " pipeline translate --triples " MEDRL_SOURCE_DIR "/data/triples.tsv",
                    dir / "log.txt"),
            0);
}
