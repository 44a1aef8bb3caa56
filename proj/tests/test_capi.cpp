#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "evitransfer.h"
#include "support.hpp"
#include "tiny_config.hpp"

using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

evt_config* tiny_config() {
  evt_config* cfg = nullptr;
  EXPECT_EQ(evt_config_from_json(kTinyConfig, &cfg), EVT_OK) << evt_last_error();
  return cfg;
}

std::string take(char* s) {
  std::string out(s ? s : "");
  evt_string_free(s);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int cli(const std::string& args) {
  const std::string cmd = std::string(EVT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CApi, VersionAndDefaults) {
  EXPECT_STRNE(evt_version(), "");
  evt_config* cfg = nullptr;
  ASSERT_EQ(evt_config_default(&cfg), EVT_OK);
  const std::string hash = take([&] { char* s = nullptr; evt_config_hash(cfg, &s); return s; }());
  EXPECT_EQ(hash.size(), 16u);
  evt_config_free(cfg);
}

TEST(CApi, StatusCodesFollowTheErrorKind) {
  evt_config* cfg = nullptr;
  EXPECT_EQ(evt_config_from_json("{bad", &cfg), EVT_ERR_CONFIG);
  EXPECT_EQ(cfg, nullptr);
  EXPECT_NE(std::string(evt_last_error()).find("configuration error"), std::string::npos);
  EXPECT_EQ(evt_config_load("/nonexistent/config.json", &cfg), EVT_ERR_IO);
  EXPECT_EQ(evt_config_from_json(nullptr, &cfg), EVT_ERR_CONFIG);

  cfg = tiny_config();
  EXPECT_EQ(evt_config_set_lambda(cfg, -1.0), EVT_ERR_CONFIG);
  EXPECT_EQ(evt_config_set_detector(cfg, static_cast<evt_detector>(9)), EVT_ERR_CONFIG);
  evt_config_free(cfg);

  // A catalog with a latitude out of range is a data error.
  TempDir dir("capi_data");
  cfg = tiny_config();
  ASSERT_EQ(evt_synth(cfg, (dir.path() / "f.evt").c_str(), (dir.path() / "c.tsv").c_str()), EVT_OK);
  evt_config_free(cfg);
  std::string catalog = slurp(dir.path() / "c.tsv");
  std::size_t lat = catalog.find('\n') + 1;
  for (int field = 0; field < 4; ++field) lat = catalog.find('\t', lat) + 1;
  catalog.replace(lat, catalog.find('\t', lat) - lat, "123.0");
  write(dir.path() / "c.tsv", catalog);
  const std::string json = R"({"data": {"source": "files", "feature_file": ")" +
                           (dir.path() / "f.evt").string() + R"(", "catalog_file": ")" +
                           (dir.path() / "c.tsv").string() + R"("}})";
  ASSERT_EQ(evt_config_from_json(json.c_str(), &cfg), EVT_OK);
  evt_result* result = nullptr;
  EXPECT_EQ(evt_run(cfg, &result), EVT_ERR_DATA) << evt_last_error();
  EXPECT_NE(std::string(evt_last_error()).find("line 2"), std::string::npos) << evt_last_error();
  EXPECT_EQ(result, nullptr);
  evt_config_free(cfg);
}

TEST(CApi, RunWritesReportAndExposesMetrics) {
  TempDir dir("capi_run");
  evt_config* cfg = tiny_config();
  ASSERT_EQ(evt_config_set_output_dir(cfg, dir.path().c_str()), EVT_OK);
  evt_result* result = nullptr;
  ASSERT_EQ(evt_run(cfg, &result), EVT_OK) << evt_last_error();
  ASSERT_EQ(evt_result_cell_count(result), 1u);
  double p = -1, r = -1, f = -1, accepted = -1;
  EXPECT_EQ(evt_result_metric(result, 0, "transfer.micro.precision", &p), EVT_OK);
  EXPECT_EQ(evt_result_metric(result, 0, "transfer.micro.recall", &r), EVT_OK);
  EXPECT_EQ(evt_result_metric(result, 0, "transfer.micro.f1", &f), EVT_OK);
  EXPECT_EQ(evt_result_metric(result, 0, "screening.ground-truth.accepted", &accepted), EVT_OK);
  EXPECT_EQ(p, r);
  EXPECT_EQ(r, f);
  EXPECT_EQ(accepted, 1.0);
  EXPECT_EQ(evt_result_metric(result, 0, "no.such.key", &p), EVT_ERR_CONFIG);
  EXPECT_EQ(evt_result_metric(result, 4, "transfer.micro.f1", &p), EVT_ERR_CONFIG);
  EXPECT_TRUE(fs::exists(evt_result_report_path(result)));
  evt_result_free(result);
  evt_config_free(cfg);
}

TEST(CApi, JsonRoundTripKeepsTheHash) {
  evt_config* cfg = tiny_config();
  ASSERT_EQ(evt_config_set_seed(cfg, 99), EVT_OK);
  char* json = nullptr;
  ASSERT_EQ(evt_config_to_json(cfg, &json), EVT_OK);
  evt_config* back = nullptr;
  ASSERT_EQ(evt_config_from_json(json, &back), EVT_OK);
  evt_string_free(json);
  char* h1 = nullptr;
  char* h2 = nullptr;
  evt_config_hash(cfg, &h1);
  evt_config_hash(back, &h2);
  EXPECT_EQ(take(h1), take(h2));
  evt_config_free(cfg);
  evt_config_free(back);
}

TEST(CApi, RotationSuiteHasSixNamedCells) {
  TempDir dir("capi_rot");
  evt_config* cfg = tiny_config();
  evt_config_set_output_dir(cfg, dir.path().c_str());
  evt_result* result = nullptr;
  ASSERT_EQ(evt_rotate(cfg, &result), EVT_OK) << evt_last_error();
  ASSERT_EQ(evt_result_cell_count(result), 6u);
  EXPECT_STREQ(evt_result_cell_name(result, 1), "flood|windstorm");
  EXPECT_EQ(evt_result_cell_name(result, 6), nullptr);
  EXPECT_TRUE(fs::exists(dir.path() / "rotation_summary.txt"));
  evt_result_free(result);
  evt_config_free(cfg);
}

TEST(CApi, ScreenReportsEntropyRatios) {
  TempDir dir("capi_screen");
  evt_config* cfg = tiny_config();
  evt_config_set_output_dir(cfg, dir.path().c_str());
  evt_result* result = nullptr;
  ASSERT_EQ(evt_screen(cfg, &result), EVT_OK) << evt_last_error();
  ASSERT_EQ(evt_result_cell_count(result), 1u);
  double ratio = -1;
  EXPECT_EQ(evt_result_metric(result, 0, "entropy_ratio", &ratio), EVT_OK);
  EXPECT_GE(ratio, 0.0);
  EXPECT_LE(ratio, 1.0);
  evt_result_free(result);
  evt_config_free(cfg);
}

TEST(CApi, NullArgumentsAreRejected) {
  evt_result* result = nullptr;
  EXPECT_EQ(evt_run(nullptr, &result), EVT_ERR_CONFIG);
  EXPECT_EQ(evt_result_cell_count(nullptr), 0u);
  EXPECT_EQ(evt_result_report_path(nullptr), nullptr);
  evt_config_free(nullptr);
  evt_result_free(nullptr);
}

class Cli : public testing::Test {
 protected:
  TempDir dir{"cli"};
  fs::path config = dir.path() / "tiny.json";
  void SetUp() override { write(config, kTinyConfig); }
};

TEST_F(Cli, RunSucceedsAndWritesReport) {
  const auto out = dir.path() / "out";
  EXPECT_EQ(cli("run --config " + config.string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "report.txt"));
}

TEST_F(Cli, FlagsOverrideTheConfig) {
  const auto out = dir.path() / "agglo";
  EXPECT_EQ(cli("run --config " + config.string() + " --seed 11 --detector agglo --lambda 0.5"
                " --skip-screening --out " + out.string()),
            0);
  const std::string report = slurp(out / "report.txt");
  EXPECT_NE(report.find("seed = 11"), std::string::npos);
  EXPECT_EQ(report.find("screening."), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("run --detector dbscan"), 2);
  EXPECT_EQ(cli("run --config /nonexistent/x.json"), 1);
  write(dir.path() / "bad.json", R"({"transfer": {"lambda": "high"}})");
  EXPECT_EQ(cli("run --config " + (dir.path() / "bad.json").string()), 2);
  write(dir.path() / "files.json", R"({"data": {"source": "files", "feature_file": ")" +
                                       (dir.path() / "missing.evt").string() +
                                       R"(", "catalog_file": "c.tsv"}})");
  EXPECT_EQ(cli("run --config " + (dir.path() / "files.json").string()), 1);
  EXPECT_EQ(cli("synth --config " + config.string() + " --features " +
                (dir.path() / "f.evt").string() + " --catalog " + (dir.path() / "c.tsv").string()),
            0);
  EXPECT_TRUE(fs::exists(dir.path() / "f.evt"));
}
