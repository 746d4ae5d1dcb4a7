// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "mxkit/io.hpp"

namespace mxkit {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "mxkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mxkit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(CliTest, QuantizeDequantizeRoundTrip) {
  ASSERT_EQ(run({"random-tensor", "--rows", "4", "--cols", "64", "--out", path("x.bin"),
                 "--seed", "3"}).code, 0);
  ASSERT_EQ(run({"quantize", "--in", path("x.bin"), "--out", path("x.mx"), "--block", "32",
                 "--vfmt", "e4m3"}).code, 0);
  const CliRun r = run({"--json", "dequantize", "--in", path("x.mx"), "--out", path("y.bin"),
                     "--reference", path("x.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_LE(j.at("max_error_in_scale_units").get<double>(), 8.0);

  std::ifstream mx(path("x.mx"), std::ios::binary);
  const MxTensor q = read_mx(mx);
  std::ifstream y(path("y.bin"), std::ios::binary);
  EXPECT_EQ(read_tensor(y), dequant(q));
}

TEST_F(CliTest, NormWritesRhoCsv) {
  ASSERT_EQ(run({"random-tensor", "--rows", "3", "--cols", "64", "--out", path("x.bin"),
                 "--seed", "1"}).code, 0);
  const CliRun r = run({"norm", "rmsnorm", "--in", path("x.bin"), "--out", path("n.bin"),
                     "--rho-out", path("rho.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream rho(path("rho.csv"));
  std::string header;
  std::getline(rho, header);
  EXPECT_EQ(header, "row,inverse_rms");
  EXPECT_EQ(run({"norm", "mxnorm", "--in", path("x.bin"), "--out", path("m.bin"), "--c", "2",
                 "--block", "32"}).code, 0);
  EXPECT_EQ(run({"norm", "mxnorm", "--in", path("x.bin"), "--out", path("m.bin"), "--c", "2",
                 "--gamma", path("x.bin")}).code, 2);
}

TEST_F(CliTest, EstimateCReciprocal) {
  const CliRun r = run({"--json", "estimate-c", "--p", "2", "--b", "16", "--blocks", "200000",
                     "--seed", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j.at("constants").at(0).at("inverse_c").get<double>(), 0.4688, 0.004);
}

TEST_F(CliTest, SpikeScoreOfConstantSeriesIsZero) {
  {
    std::ofstream f(path("loss.csv"));
    f << "step,loss\n";
    for (int i = 0; i < 500; ++i) f << i << ",2.5\n";
  }
  const CliRun r = run({"--json", "spike-score", "--in", path("loss.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("spike_score").get<double>(), 0.0);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"--help"}).code, 0);
  CliRun r = run({"no-such-command"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u) << r.err;
  r = run({"convergence"});  // missing --seed
  EXPECT_EQ(r.code, 2);
  r = run({"quantize", "--in", path("missing.bin"), "--out", path("o")});
  EXPECT_EQ(r.code, 2);
  {
    std::ofstream f(path("junk.bin"));
    f << "garbage\n";
  }
  r = run({"quantize", "--in", path("junk.bin"), "--out", path("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u) << r.err;
  r = run({"fidelity", "--c", "2.4"});  // sweep without a seed
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, SeededCommandsAreDeterministic) {
  const std::vector<std::string> cmd{"convergence", "--blocks", "4", "16", "--seeds", "8",
                                     "--seed", "11"};
  const CliRun a = run(cmd);
  const CliRun b = run(cmd);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  std::vector<std::string> threaded{"--threads", "3"};
  threaded.insert(threaded.end(), cmd.begin(), cmd.end());
  EXPECT_EQ(run(threaded).out, a.out);
}

TEST_F(CliTest, TrafficAndPostroundTable) {
  const CliRun t = run({"--json", "traffic", "--t", "1", "--d", "1024", "--block", "32"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto j = nlohmann::json::parse(t.out);
  EXPECT_FALSE(j.empty());
  const CliRun p = run({"postround-table", "--block", "8", "--resolution", "32"});
  ASSERT_EQ(p.code, 0) << p.err;
  const PostRoundTable tab = postround_table_from_json(nlohmann::json::parse(p.out));
  EXPECT_EQ(tab.block_size, 8u);
}

TEST_F(CliTest, TrainToyWritesLossCsv) {
  const CliRun r = run({"--json", "train-toy", "--variant", "mxnorm-p2", "--steps", "5", "--out",
                     path("loss.csv"), "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(path("loss.csv"));
  EXPECT_EQ(read_loss_csv(f).size(), 5u);
  EXPECT_EQ(nlohmann::json::parse(r.out).at("variant"), "mxnorm-p2");
}

}  // namespace
}  // namespace mxkit
