#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "mcanet/cli.hpp"

using namespace mcanet;
using mcanet::testing::scratch_dir;

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One synthetic dataset shared by the pipeline tests.
const fs::path& dataset() {
  static const fs::path dir = [] {
    auto d = scratch_dir("cli_data");
    const auto r = cli({"synth", "--out", d.string(), "--n", "60", "--classes", "6", "--size", "32"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, MissingOrUnknownSubcommandIsUsageError) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"fly"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, BadConfigValueIsUsageError) {
  auto r = cli({"train", "--manifest", (dataset() / "manifest.csv").string(), "--csra.heads", "banana"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("csra.heads"), std::string::npos);
  EXPECT_EQ(cli({"train", "--manifest", (dataset() / "manifest.csv").string(), "--no.such", "1"}).code,
            kExitUsage);
}

TEST(Cli, MissingInputsAreUsageErrors) {
  EXPECT_EQ(cli({"train"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--manifest", "/nonexistent/manifest.csv"}).code, kExitUsage);
  EXPECT_EQ(cli({"eval", "--checkpoint", "/nonexistent/model.mcan"}).code, kExitUsage);
  EXPECT_EQ(cli({"cam"}).code, kExitUsage);
}

TEST(Cli, CorruptCheckpointIsDataError) {
  auto dir = scratch_dir("cli_corrupt");
  std::ofstream(dir / "bad.mcan") << "NOPE not an archive";
  auto r = cli({"eval", "--checkpoint", (dir / "bad.mcan").string(), "--manifest",
                (dataset() / "manifest.csv").string()});
  EXPECT_EQ(r.code, kExitData);
}

TEST(Cli, InvalidManifestIsDataError) {
  auto dir = scratch_dir("cli_badmanifest");
  std::ofstream(dir / "m.csv") << "image_path,a\nx.ppm,7\n";
  EXPECT_EQ(cli({"train", "--manifest", (dir / "m.csv").string(), "--out", (dir / "run").string()}).code,
            kExitData);
}

TEST(Cli, SynthWritesDataset) {
  EXPECT_TRUE(fs::exists(dataset() / "manifest.csv"));
  EXPECT_TRUE(fs::exists(dataset() / "boxes.csv"));
  EXPECT_TRUE(fs::exists(dataset() / "images" / "img_00059.ppm"));
}

TEST(Cli, TrainEvalCamPipeline) {
  auto run = scratch_dir("cli_run");
  const auto manifest = (dataset() / "manifest.csv").string();
  auto t = cli({"train", "--manifest", manifest, "--out", run.string(), "--optim.epochs", "2"});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  for (const char* f : {"config.txt", "seed.txt", "loss_log.csv", "model.mcan", "report.txt", "report.csv",
                        "checkpoints/epoch_001.mcan", "checkpoints/epoch_002.mcan"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  const auto log = slurp(run / "loss_log.csv");
  EXPECT_EQ(log.rfind("epoch,step,lr_head,lr_backbone,loss\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1 + 2 * 3);

  auto e = cli({"eval", "--checkpoint", (run / "model.mcan").string(), "--out", run.string()});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  EXPECT_TRUE(fs::exists(run / "eval_test.csv"));
  EXPECT_EQ(slurp(run / "eval_test.csv"), slurp(run / "report.csv"));

  auto c = cli({"cam", "--checkpoint", (run / "model.mcan").string(), "--out", run.string()});
  ASSERT_EQ(c.code, kExitOk) << c.err;
  EXPECT_NE(c.out.find("localization:"), std::string::npos);
  EXPECT_FALSE(fs::is_empty(run / "cam"));

  auto resumed = cli({"train", "--manifest", manifest, "--out", run.string(), "--optim.epochs", "3", "--resume",
                      (run / "checkpoints/epoch_002.mcan").string()});
  ASSERT_EQ(resumed.code, kExitOk) << resumed.err;
  const auto log2 = slurp(run / "loss_log.csv");
  EXPECT_EQ(std::count(log2.begin(), log2.end(), '\n'), 1 + 3 * 3);
}

TEST(Cli, UntrainedModelScoresNearPrevalence) {
  auto run = scratch_dir("cli_untrained");
  auto t = cli({"train", "--manifest", (dataset() / "manifest.csv").string(), "--out", run.string(),
                "--optim.epochs", "0"});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  RunConfig cfg = parse_config(slurp(run / "config.txt"), {{"run.checkpoint", (run / "model.mcan").string()},
                                                          {"data.manifest", (dataset() / "manifest.csv").string()}});
  std::ostringstream sink;
  auto report = cmd_eval(cfg, Split::kAll, sink);
  auto m = load_manifest(dataset() / "manifest.csv");
  double prevalence = 0;
  for (const auto& r : m.rows)
    for (auto v : r.labels) prevalence += v;
  prevalence /= static_cast<double>(m.rows.size() * m.num_classes());
  EXPECT_NEAR(report.map, prevalence, 0.2);
}

TEST(Cli, GradcheckPasses) {
  auto r = cli({"gradcheck"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_NE(r.out.find("all gradients match"), std::string::npos);
}
