#include <d3/image.hpp>
#include <d3/manifest.hpp>
#include <d3/random.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;
using namespace d3;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("d3_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" + std::string(D3CLI_PATH) + "' " + args + " > '" +
                            out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
  }

  // A few smooth synthetic images in `sub`.
  fs::path make_images(const std::string& sub, int count) const {
    const fs::path d = dir_ / sub;
    fs::create_directories(d);
    Rng rng(7);
    for (int k = 0; k < count; ++k) {
      GrayImage img(40, 32);
      const double f = uniform(rng, 0.1, 0.4);
      for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) img.at(r, c) = 128.0 + 70.0 * std::sin(f * c) * std::cos(0.2 * r);
      save_gray(img, d / ("img" + std::to_string(k) + ".pgm"));
    }
    return d;
  }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, ComplexityPrintsGroupedCounts) {
  const CliResult r = run("--manifest cx.manifest complexity --d3 256,256,64");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("multiplies 66,944"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("params 66,560"), std::string::npos) << r.out;
  const RunManifest m = RunManifest::parse(read_file(path("cx.manifest")));
  EXPECT_EQ(m.command, "complexity");
  EXPECT_EQ(m.config.at("d3"), "256,256,64");
  const CliResult a = run("complexity --conv arcnn");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("params 106,448"), std::string::npos) << a.out;
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("complexity --d3 0,8,64").code, 1);
  EXPECT_EQ(run("codec --in x").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, MissingInputsExitTwo) {
  EXPECT_EQ(run("codec --in nowhere --out o --quality 10").code, 2);
  make_images("imgs", 1);
  const CliResult r = run("restore --model missing.ckpt --in imgs --out out");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.ckpt"), std::string::npos);
}

TEST_F(CliTest, EvalRejectsUnmatchedFiles) {
  make_images("ref", 2);
  make_images("test", 1);
  const CliResult r = run("eval --ref ref --test test --out report.csv");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("img1.pgm"), std::string::npos) << r.err;
}

TEST_F(CliTest, CodecTrainRestoreEval) {
  make_images("clean", 3);
  ASSERT_EQ(run("codec --in clean --out degraded --quality 10").code, 0);
  EXPECT_TRUE(fs::exists(path("degraded/img0.pgm")));
  EXPECT_TRUE(fs::exists(path("degraded/img0.blocks")));
  EXPECT_TRUE(fs::exists(path("degraded/manifest.txt")));

  const std::string train =
      "train --data clean --out m.ckpt --quality 10 --p-phi 8 --p-psi 8 --init random --epochs 2 --patches 300 "
      "--batch 32 --seed 3";
  const CliResult t = run(train);
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(path("m.ckpt.history.csv")));
  EXPECT_TRUE(fs::exists(path("m.ckpt.manifest")));
  const std::string first = read_file(path("m.ckpt"));
  ASSERT_EQ(run(train).code, 0);
  EXPECT_EQ(read_file(path("m.ckpt")), first);

  const CliResult rs = run("restore --model m.ckpt --in degraded --out restored --stride 4 --costs costs.csv");
  ASSERT_EQ(rs.code, 0) << rs.err;
  EXPECT_TRUE(fs::exists(path("costs.csv")));

  const CliResult ev = run("eval --ref clean --test restored --out report.csv --costs costs.csv");
  ASSERT_EQ(ev.code, 0) << ev.err;
  const std::string csv = read_file(path("report.csv"));
  EXPECT_EQ(csv.rfind("image,psnr,ssim,psnrb,restore_ms,multiplies\n", 0), 0u) << csv;
  EXPECT_NE(csv.find("img2.pgm,"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("report.md")));
  const RunManifest m = RunManifest::parse(read_file(path("report.csv.manifest")));
  EXPECT_EQ(m.config.at("metrics"), "psnr,ssim,psnrb");
}

TEST_F(CliTest, TransferChainWritesOneCheckpointPerQuality) {
  make_images("clean", 2);
  const CliResult t = run(
      "train --data clean --out chain.ckpt --quality 20,10 --p-phi 8 --p-psi 8 --init random --epochs 1 "
      "--patches 200");
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(path("chain_q20.ckpt")));
  EXPECT_TRUE(fs::exists(path("chain_q10.ckpt")));
  EXPECT_EQ(run("train --data clean --out bad.ckpt --quality 10,20 --p-phi 8 --p-psi 8 --init random").code, 1);
}
