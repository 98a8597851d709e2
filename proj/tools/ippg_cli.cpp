// ippg: synthetic data generation, LOSO training, evaluation and reporting
// for the imaging-PPG heart-rate pipeline.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ippg/app.hpp"
#include "ippg/error.hpp"

namespace {

using ippg::RunConfig;

std::string env(const std::string& name) { return "IPPG_" + name; }

void add_common(CLI::App* cmd, RunConfig& cfg, std::string& scenario, std::string& motion) {
  cmd->add_option("--out", cfg.out_dir, "Output directory (must exist)")->envname(env("OUT"));
  cmd->add_option("--seed", cfg.seed, "Master seed for all randomness")->envname(env("SEED"));
  cmd->add_option("--scenario", scenario, "garage | driving")
      ->check(CLI::IsMember({"garage", "driving"}))
      ->envname(env("SCENARIO"));
  cmd->add_option("--motion", motion, "still | small_motion")
      ->check(CLI::IsMember({"still", "small_motion"}))
      ->envname(env("MOTION"));
}

void add_model(CLI::App* cmd, RunConfig& cfg, std::string& loss, std::string& augment) {
  cmd->add_option("--data-root", cfg.data_root, "Directory holding session manifests")
      ->envname(env("DATA_ROOT"));
  cmd->add_option("--loss", loss, "pearson | ws1 | ws2 | fdl")
      ->check(CLI::IsMember({"pearson", "ws1", "ws2", "fdl"}))
      ->envname(env("LOSS"));
  cmd->add_option("--augment", augment, "Resampling augmentation: on | off")
      ->check(CLI::IsMember({"on", "off"}))
      ->envname(env("AUGMENT"));
  cmd->add_option("--max-shift", cfg.train.loss.max_shift, "WS-1 shift range (frames)");
  cmd->add_option("--extended-len", cfg.train.loss.extended_len, "WS-2 input length (frames)");
  cmd->add_option("--window", cfg.windowing.window_len, "Window length (frames)");
  cmd->add_option("--stride", cfg.windowing.stride, "Window stride (frames)");
  cmd->add_option("--band-low", cfg.band.low, "Pass band lower edge (bpm)");
  cmd->add_option("--band-high", cfg.band.high, "Pass band upper edge (bpm)");
  cmd->add_option("--levels", cfg.unet.levels, "U-net levels");
  cmd->add_option("--base-channels", cfg.unet.base_channels, "U-net channels at level 0");
  cmd->add_option("--kernel", cfg.unet.kernel_len, "U-net kernel length (odd)");
  cmd->add_option("--jobs", cfg.jobs, "Folds run in parallel")->envname(env("JOBS"));
  cmd->add_flag("--deterministic", cfg.deterministic, "Sequential folds, reproducible output")
      ->envname(env("DETERMINISTIC"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imaging-PPG heart-rate benchmark toolkit"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.require_subcommand(1);

  RunConfig cfg;
  std::string scenario, motion, loss = "pearson", augment = "off";
  std::vector<std::string> report_inputs;
  std::string report_out;

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  add_common(synth, cfg, scenario, motion);
  synth->add_option("--subjects", cfg.synth.n_subjects, "Number of subjects");
  synth->add_option("--duration", cfg.synth.duration, "Seconds per session");
  synth->add_option("--noise-std", cfg.synth.noise_std, "ROI noise relative to pulse amplitude");
  synth->add_option("--baseline-std", cfg.synth.baseline_drift_std, "Slow baseline wander amplitude");
  synth->add_option("--label-noise-std", cfg.synth.label_noise_std, "Label noise");
  synth->add_option("--hr-low", cfg.synth.hr_low, "Lowest initial HR (bpm)");
  synth->add_option("--hr-high", cfg.synth.hr_high, "Highest initial HR (bpm)");
  synth->add_option("--hr-drift", cfg.synth.hr_drift, "HR random-walk std (bpm/sqrt(s))");
  synth->add_option("--label-fps", cfg.synth.label_fps, "Label sampling rate: 30 or 60");
  synth->add_option("--label-delay", cfg.synth.label_delay_frames, "Delay labels by N frames");

  auto* train = app.add_subcommand("train", "Train one model per leave-one-subject-out fold");
  add_common(train, cfg, scenario, motion);
  add_model(train, cfg, loss, augment);
  train->add_option("--epochs", cfg.train.epochs, "Training epochs");
  train->add_option("--batch-size", cfg.train.batch_size, "Batch size");
  train->add_option("--lr", cfg.train.lr0, "Initial learning rate");
  train->add_option("--decay", cfg.train.decay, "Per-epoch learning-rate decay");
  train->add_option("--fdl-epochs", cfg.fdl_train.epochs, "HR-estimator epochs (fdl)");
  train->add_option("--fdl-lr", cfg.fdl_train.lr0, "HR-estimator learning rate (fdl)");

  auto* eval = app.add_subcommand("eval", "Evaluate fold checkpoints on held-out subjects");
  add_common(eval, cfg, scenario, motion);
  add_model(eval, cfg, loss, augment);
  eval->add_flag("--emit-plots", cfg.emit_plots, "Write HR-track SVG plots");
  eval->add_flag("--emit-spectrograms", cfg.emit_spectrograms, "Write spectrogram images + CSV");

  auto* report = app.add_subcommand("report", "Combine report.csv files into one table");
  report->add_option("inputs", report_inputs, "report.csv files")->required();
  report->add_option("--out", report_out, "Write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.train.loss.kind = ippg::parse_loss_kind(loss);
    cfg.train.augment.enabled = augment == "on";
    if (!scenario.empty()) {
      cfg.filter.scenario = ippg::parse_scenario(scenario);
      cfg.synth.scenario = *cfg.filter.scenario;
    }
    if (!motion.empty()) {
      cfg.filter.motion = ippg::parse_motion(motion);
      cfg.synth.motion = *cfg.filter.motion;
    }
    cfg.finalize();

    if (synth->parsed()) {
      ippg::cmd_synth(cfg);
      std::cout << "wrote " << cfg.synth.n_subjects << " sessions to " << cfg.out_dir.string()
                << " (config " << cfg.hash() << ")\n";
    } else if (train->parsed()) {
      const auto summary = ippg::cmd_train(cfg);
      for (std::size_t i = 0; i < summary.test_subjects.size(); ++i) {
        std::printf("fold %zu  test %-6s  final loss %.4f  audited batches %zu\n", i,
                    summary.test_subjects[i].c_str(), summary.final_losses[i],
                    summary.audited_batches[i]);
      }
    } else if (eval->parsed()) {
      const auto summary = ippg::cmd_eval(cfg);
      ippg::write_table(std::cout, summary.reports);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> paths(report_inputs.begin(), report_inputs.end());
      ippg::cmd_report(paths, report_out);
    }
  } catch (const ippg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
