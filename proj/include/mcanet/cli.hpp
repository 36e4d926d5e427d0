#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcanet/config.hpp"
#include "mcanet/data.hpp"
#include "mcanet/metrics.hpp"

namespace mcanet {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitAcceptance = 3,
};

// Subcommands: synth, train, eval, cam, gradcheck. `args` excludes the
// program name. Errors are reported on `err` and mapped to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

SynthResult cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out);

struct TrainSummary {
  std::size_t epochs_run = 0;
  double seconds = 0;
  double train_map = 0;
  double test_map = 0;
  std::vector<EpochStats> epochs;
  EvalReport test_report;
  std::filesystem::path final_checkpoint;
};

// Writes into cfg.out_dir: config.txt, seed.txt, loss_log.csv,
// checkpoints/epoch_NNN.mcan, model.mcan, report.txt, report.csv.
// With `resume`, continues from that checkpoint's epoch.
TrainSummary cmd_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume,
                       std::ostream& out);

enum class Split { kTrain, kTest, kAll };
Split parse_split(std::string_view text);

EvalReport cmd_eval(const RunConfig& cfg, Split split, std::ostream& out);

struct CamSummary {
  std::vector<std::filesystem::path> written;
  std::size_t scored = 0;  // (image, class) pairs with a ground-truth box
  std::size_t hits = 0;
  double hit_rate() const { return scored ? static_cast<double>(hits) / static_cast<double>(scored) : 0; }
};

// Heatmaps for the given manifest image paths (default: the test split) and
// class names (default: the classes present in each image), written to
// cfg.out_dir/cam. Scores localization when a boxes file is available.
CamSummary cmd_cam(const RunConfig& cfg, const std::vector<std::string>& images,
                   const std::vector<std::string>& classes, std::ostream& out);

// Runs the full gradient-check suite; true when every case passes.
bool cmd_gradcheck(const RunConfig& cfg, std::ostream& out);

}  // namespace mcanet
