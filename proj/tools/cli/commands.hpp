#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mpre/cohort.hpp"
#include "mpre/trainer.hpp"

namespace mpre::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kDataError = 2,
  kNumericalError = 3,
};

// Merged result of the optional key = value config file and command-line flags.
struct RunConfig {
  std::string command;
  std::string visits;
  std::string statics;
  std::string labels;
  std::string synth;
  std::size_t patients = 0;  // 0 keeps the preset's count
  std::string out = "mpre_out";
  std::uint64_t seed = 7;
  int symlet = 18;
  std::size_t kernel_width = 2;
  std::string dilations = "0,1,3";
  std::size_t tmax = 10;
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t epochs = 50;
  std::size_t folds = 10;
  std::string ablation = "A7";
  bool parallel_folds = false;
  std::string checkpoint;
  std::string feature;

  train::TrainConfig train_config() const;
  // Same syntax as the config file; rerunning with it reproduces the run.
  std::string manifest() const;
};

// Loads the CSV cohort or generates the synthetic one, unpadded.
data::Cohort load_raw_cohort(const RunConfig& config, std::size_t classes = 0);

int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_eval(const RunConfig& config, std::ostream& log);
int cmd_decompose(const RunConfig& config, std::ostream& log);
int cmd_sweep_symlets(const RunConfig& config, std::ostream& log);
int cmd_inspect_attention(const RunConfig& config, std::ostream& log);
int cmd_correlate(const RunConfig& config, std::ostream& log);
int cmd_synth(const RunConfig& config, std::ostream& log);

// Full command-line entry point; maps error classes onto exit codes.
int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

}  // namespace mpre::cli
