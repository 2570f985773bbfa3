#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "chunkvc/cli.hpp"

using namespace chunkvc;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "chunkvc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(int(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("chunkvc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    std::ofstream(path("tiny.cfg")) << config_to_text(ModelConfig::tiny(Setting::Full));
    ASSERT_EQ(cli({"init-weights", "--config", path("tiny.cfg"), "--seed", "42", "--out", path("m.cnvc")}), 0);
    write_wav(noise_audio(16000 + 555, 1), path("src.wav"));
    write_wav(noise_audio(16000, 2), path("ref.wav"));
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, InitWeightsIsDeterministic) {
  ASSERT_EQ(cli({"init-weights", "--config", path("tiny.cfg"), "--seed", "42", "--out", path("again.cnvc")}), 0);
  EXPECT_EQ(slurp(path("m.cnvc")), slurp(path("again.cnvc")));
  EXPECT_EQ(slurp(path("m.cnvc")), serialize_model(ModelConfig::tiny(Setting::Full),
                                                   init_weights(ModelConfig::tiny(Setting::Full), 42)));
}

TEST_F(Cli, InitWeightsRejectsBadConfigAndMissingOut) {
  ModelConfig bad = ModelConfig::tiny();
  bad.vocoder.upsample_factors = {8, 8, 2, 2};
  std::ofstream(path("bad.cfg")) << config_to_text(bad);
  EXPECT_EQ(cli({"init-weights", "--config", path("bad.cfg"), "--out", path("bad.cnvc")}), 1);
  EXPECT_FALSE(fs::exists(path("bad.cnvc")));
  EXPECT_EQ(cli({"init-weights", "--config", path("tiny.cfg")}), 1);
  EXPECT_EQ(cli({"init-weights", "--bogus", "1", "--out", path("x.cnvc")}), 1);
}

TEST_F(Cli, ConvertPreservesDurationAndIsDeterministic) {
  for (const char* setting : {"full", "fast"}) {
    ASSERT_EQ(cli({"convert", "--model", path("m.cnvc"), "--source", path("src.wav"), "--reference", path("ref.wav"),
                   "--out", path("a.wav"), "--setting", setting, "--report", path("r.txt")}),
              0);
    ASSERT_EQ(cli({"convert", "--model", path("m.cnvc"), "--source", path("src.wav"), "--reference", path("ref.wav"),
                   "--out", path("b.wav"), "--setting", setting, "--threaded"}),
              0);
    EXPECT_EQ(load_wav(path("a.wav")).samples.size(), 16000u + 555u);
    EXPECT_EQ(slurp(path("a.wav")), slurp(path("b.wav")));
    const LatencyReport r = LatencyReport::from_text(slurp(path("r.txt")));
    EXPECT_EQ(r.chunk_ms, std::string(setting) == "full" ? 80.0 : 20.0);
  }
}

TEST_F(Cli, ConvertErrors) {
  const std::vector<std::string> base = {"convert", "--model", path("m.cnvc"), "--source", path("src.wav"),
                                         "--reference", path("ref.wav"), "--out", path("o.wav")};
  auto with = [&base](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  EXPECT_EQ(cli(with({"--chunk-ms", "30"})), 1);
  EXPECT_EQ(cli(with({"--setting", "medium"})), 1);

  std::ofstream(path("junk.wav")) << "not a wav file";
  std::vector<std::string> junk = base;
  junk[4] = path("junk.wav");
  EXPECT_EQ(cli(junk), 2);

  write_wav(noise_audio(1000, 3), path("short.wav"));
  std::vector<std::string> short_ref = base;
  short_ref[6] = path("short.wav");
  EXPECT_EQ(cli(short_ref), 1);

  std::vector<std::string> missing = base;
  missing[2] = path("nope.cnvc");
  EXPECT_EQ(cli(missing), 2);
}

TEST_F(Cli, BenchReport) {
  ::testing::internal::CaptureStdout();
  ASSERT_EQ(cli({"bench", "--model", path("m.cnvc"), "--seconds", "1", "--setting", "fast", "--report", path("b.txt")}), 0);
  const std::string printed = ::testing::internal::GetCapturedStdout();
  EXPECT_EQ(printed, slurp(path("b.txt")));
  const LatencyReport r = LatencyReport::from_text(printed);
  EXPECT_EQ(r.chunk_ms, 20.0);
  EXPECT_EQ(r.right_context_ms, 0.0);
  EXPECT_GT(r.overall_rtf, 0.0);
  const double delays[3] = {r.content_ms, r.main_ms, r.vocoder_ms};
  EXPECT_NEAR(r.overall_ms, overall_latency(delays, r.chunk_ms, r.right_context_ms), 1e-9);
  EXPECT_EQ(cli({"bench", "--model", path("m.cnvc"), "--seconds", "0"}), 1);
}

TEST_F(Cli, VerifyFreshModel) {
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(cli({"verify", "--model", path("m.cnvc")}), 0);
  const std::string first = ::testing::internal::GetCapturedStdout();
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(cli({"verify", "--model", path("m.cnvc")}), 0);
  const std::string second = ::testing::internal::GetCapturedStdout();
  EXPECT_EQ(first, second);
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 5);
  EXPECT_EQ(first.find("FAIL"), std::string::npos);
}

TEST_F(Cli, VerifyRejectsCorruptShape) {
  const ModelConfig cfg = ModelConfig::tiny(Setting::Full);
  ModelWeights w = init_weights(cfg, 42);
  auto& t = w.at("vocoder.post.weight");
  t.dims = {std::uint32_t(t.data.size())};
  std::ofstream(path("bad.cnvc"), std::ios::binary) << serialize_model(cfg, w);
  EXPECT_EQ(cli({"verify", "--model", path("bad.cnvc")}), 2);
}
