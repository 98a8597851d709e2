#pragma once

// Command implementations behind the ippg command-line tool.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ippg/dataset_io.hpp"
#include "ippg/evaluator.hpp"
#include "ippg/synthgen.hpp"
#include "ippg/trainer.hpp"
#include "ippg/unet_model.hpp"

namespace ippg {

struct RunConfig {
  WindowingConfig windowing;
  BandConfig band;
  TrainConfig train;
  TrainConfig fdl_train;  // HR-estimator stage of the FDL variant
  UnetSpec unet;
  HrEstimatorSpec hr;
  SynthSpec synth;
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  SessionFilter filter;
  std::uint64_t seed = 7;
  bool deterministic = false;
  std::size_t jobs = 1;
  bool emit_plots = false;
  bool emit_spectrograms = false;

  RunConfig();

  // Propagates the master seed and shared settings into the sub-configs.
  void finalize();
  void validate() const;
  // Canonical JSON of every setting that affects results.
  std::string to_json() const;
  std::string hash() const;
};

// A trained fold: the U-net and, for FDL, the HR estimator on top of it.
struct FoldModel {
  LossKind kind = LossKind::pearson;
  ModelParams unet;
  std::optional<ModelParams> hr_estimator;
};

// Windows used by a method: 300-frame inputs, or extended inputs for WS-2.
std::vector<WindowPair> method_windows(const Session& s, const RunConfig& cfg);

// Estimated pulse waveform aligned with the label window.
std::vector<double> predict_waveform(const FoldModel& model, const WindowPair& w,
                                     const RunConfig& cfg);
double predict_hr(const FoldModel& model, const WindowPair& w, const RunConfig& cfg);

std::uint64_t fold_seed(std::uint64_t master, const std::string& test_subject);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir,
                                      const std::string& test_subject, bool hr_estimator);

struct TrainSummary {
  std::vector<std::string> test_subjects;
  std::vector<double> final_losses;
  std::vector<std::size_t> audited_batches;
};

struct EvalSummary {
  std::vector<EvalReport> reports;  // one per condition
  std::vector<HrTrack> tracks;
};

void cmd_synth(const RunConfig& cfg);
TrainSummary cmd_train(const RunConfig& cfg);
EvalSummary cmd_eval(const RunConfig& cfg);
// Reads report.csv files and writes one combined table.
void cmd_report(const std::vector<std::filesystem::path>& report_csvs,
                const std::filesystem::path& out_file);

// Parses report.csv back into reports.
std::vector<EvalReport> read_report_csv(const std::filesystem::path& path);

}  // namespace ippg
