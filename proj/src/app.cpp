#include "ippg/app.hpp"

#include <omp.h>

#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ippg/error.hpp"
#include "ippg/hash.hpp"
#include "ippg/plots.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace ippg {

RunConfig::RunConfig() {
  fdl_train.lr0 = 1.0e-3;
  fdl_train.loss.kind = LossKind::fdl;
  finalize();
}

void RunConfig::finalize() {
  train.band = band;
  train.fps = windowing.fps;
  train.seed = seed;
  train.augment.seed = seed;
  train.loss.label_len = windowing.window_len;
  fdl_train.band = band;
  fdl_train.fps = windowing.fps;
  fdl_train.seed = seed;
  fdl_train.augment = train.augment;
  fdl_train.batch_size = train.batch_size;
  fdl_train.loss = train.loss;
  fdl_train.loss.kind = LossKind::fdl;
  fdl_train.exec = train.exec;
  synth.seed = seed;
  hr.input_len = windowing.window_len;
  if (deterministic) jobs = 1;
}

void RunConfig::validate() const {
  windowing.validate();
  band.validate(windowing.fps);
  train.validate();
  fdl_train.validate(true);
  unet.validate();
  hr.validate();
  if (unet.in_channels != kRoiCount) throw Error(ErrorCode::BadConfig, "U-net must take 23 channels");
  if (jobs == 0) throw Error(ErrorCode::BadConfig, "--jobs must be >= 1");
}

namespace {

ordered_json train_json(const TrainConfig& t) {
  ordered_json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr0"] = t.lr0;
  j["decay"] = t.decay;
  j["adam"] = {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}};
  j["seed"] = t.seed;
  j["loss"] = {{"kind", to_string(t.loss.kind)},
               {"max_shift", t.loss.max_shift},
               {"extended_len", t.loss.extended_len},
               {"label_len", t.loss.label_len}};
  j["augment"] = {{"enabled", t.augment.enabled},
                  {"r_low", t.augment.r_low},
                  {"r_high", t.augment.r_high},
                  {"seed", t.augment.seed}};
  return j;
}

}  // namespace

std::string RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["windowing"] = {{"window_len", windowing.window_len}, {"stride", windowing.stride},
                    {"fps", windowing.fps}};
  j["band"] = {{"low", band.low}, {"high", band.high}};
  j["train"] = train_json(train);
  j["fdl_train"] = train_json(fdl_train);
  j["unet"] = {{"in_channels", unet.in_channels}, {"levels", unet.levels},
               {"base_channels", unet.base_channels}, {"kernel_len", unet.kernel_len}};
  j["hr_estimator"] = {{"channels", hr.channels}, {"kernel_len", hr.kernel_len},
                       {"stride", hr.stride}, {"output_scale", hr.output_scale}};
  j["synth"] = {{"n_subjects", synth.n_subjects}, {"duration", synth.duration},
                {"label_fps", synth.label_fps}, {"hr_low", synth.hr_low},
                {"hr_high", synth.hr_high}, {"hr_drift", synth.hr_drift},
                {"harmonic_amp", synth.harmonic_amp}, {"noise_std", synth.noise_std},
                {"baseline_drift_std", synth.baseline_drift_std},
                {"label_noise_std", synth.label_noise_std},
                {"label_delay_frames", synth.label_delay_frames},
                {"scenario", to_string(synth.scenario)}, {"motion", to_string(synth.motion)}};
  j["filter"] = {{"scenario", filter.scenario ? to_string(*filter.scenario) : "any"},
                 {"motion", filter.motion ? to_string(*filter.motion) : "any"}};
  return j.dump();
}

std::string RunConfig::hash() const { return hex64(fnv1a(to_json())); }

std::vector<WindowPair> method_windows(const Session& s, const RunConfig& cfg) {
  if (cfg.train.loss.kind == LossKind::ws2) {
    return make_extended_windows(s.traces, s.label, cfg.windowing, cfg.band,
                                 cfg.train.loss.extended_len);
  }
  return make_windows(s.traces, s.label, cfg.windowing, cfg.band);
}

std::vector<double> predict_waveform(const FoldModel& model, const WindowPair& w,
                                     const RunConfig& cfg) {
  const auto est = unet_forward(model.unet, w.input, cfg.train.exec);
  const auto aligned = std::span<const double>(est).subspan(w.label_offset, w.label.size());
  return bandpass_window(aligned, cfg.band, cfg.windowing.fps);
}

double predict_hr(const FoldModel& model, const WindowPair& w, const RunConfig& cfg) {
  const auto est = unet_forward(model.unet, w.input, cfg.train.exec);
  const auto aligned = std::span<const double>(est).subspan(w.label_offset, w.label.size());
  if (model.kind == LossKind::fdl) {
    return hr_estimator_forward(*model.hr_estimator,
                                hr_estimator_input(aligned, cfg.band, cfg.windowing.fps),
                                cfg.train.exec);
  }
  return estimate_hr(aligned, cfg.windowing.fps, cfg.band);
}

std::uint64_t fold_seed(std::uint64_t master, const std::string& test_subject) {
  return fnv1a(test_subject.data(), test_subject.size(), fnv1a(&master, sizeof master));
}

fs::path checkpoint_path(const fs::path& out_dir, const std::string& test_subject,
                         bool hr_estimator) {
  return out_dir / "checkpoints" /
         ("fold_" + test_subject + (hr_estimator ? ".hrest.ckpt" : ".unet.ckpt"));
}

namespace {

void require_out_dir(const fs::path& dir) {
  if (dir.empty() || !fs::is_directory(dir)) {
    throw Error(ErrorCode::Io, "output directory '" + dir.string() + "' does not exist");
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return os;
}

std::string condition_of(const Session& s) {
  return to_string(s.manifest.scenario) + "_" + to_string(s.manifest.motion);
}

struct SubjectData {
  std::vector<const Session*> sessions;
};

std::map<std::string, SubjectData> by_subject(const std::vector<Session>& sessions) {
  std::map<std::string, SubjectData> out;
  for (const auto& s : sessions) out[s.manifest.subject_id].sessions.push_back(&s);
  return out;
}

std::vector<std::string> keys(const std::map<std::string, SubjectData>& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

std::vector<Session> load_for(const RunConfig& cfg) {
  auto sessions = load_dataset(cfg.data_root, cfg.filter);
  if (sessions.empty()) {
    throw Error(ErrorCode::NoSessions, "no sessions under '" + cfg.data_root.string() +
                                           "' match the condition filter");
  }
  return sessions;
}

// Runs body(i) for every fold, in parallel up to `jobs`, rethrowing the first failure.
template <typename Body>
void for_each_fold(std::size_t n, std::size_t jobs, Body body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(jobs)) if (jobs > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string log_line(std::size_t fold, const std::string& test, const char* stage,
                     const BatchInfo& b) {
  ordered_json j;
  j["fold"] = fold;
  j["test_subject"] = test;
  j["stage"] = stage;
  j["epoch"] = b.epoch;
  j["batch"] = b.batch;
  j["loss"] = b.loss;
  j["lr"] = b.lr;
  return j.dump();
}

}  // namespace

void cmd_synth(const RunConfig& cfg) {
  cfg.synth.validate();
  require_out_dir(cfg.out_dir);
  generate_dataset(cfg.synth, cfg.out_dir);
  ordered_json meta;
  meta["config_hash"] = cfg.hash();
  meta["seed"] = cfg.seed;
  meta["config"] = ordered_json::parse(cfg.to_json());
  open_out(cfg.out_dir / "synth_meta.json") << meta.dump(2) << "\n";
}

TrainSummary cmd_train(const RunConfig& cfg) {
  cfg.validate();
  require_out_dir(cfg.out_dir);
  const auto sessions = load_for(cfg);
  const auto subjects = by_subject(sessions);
  const auto ids = keys(subjects);
  const FoldPlan plan = loso_split(ids);
  plan.validate(ids);

  std::map<std::string, std::vector<WindowPair>> windows;
  for (const auto& s : sessions) {
    auto w = method_windows(s, cfg);
    auto& dst = windows[s.manifest.subject_id];
    dst.insert(dst.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }

  fs::create_directories(cfg.out_dir / "checkpoints");
  const std::string hash = cfg.hash();
  const std::size_t n = plan.folds.size();
  std::vector<std::vector<std::string>> logs(n);
  TrainSummary summary;
  summary.test_subjects.resize(n);
  summary.final_losses.resize(n);
  summary.audited_batches.resize(n);

  for_each_fold(n, cfg.jobs, [&](std::size_t i) {
    const Fold& fold = plan.folds[i];
    std::vector<WindowPair> train;
    for (const auto& id : fold.train_subjects) {
      train.insert(train.end(), windows.at(id).begin(), windows.at(id).end());
    }
    LosoAuditor auditor(fold.test_subject);
    const char* stage = "unet";
    TrainHooks hooks;
    hooks.on_batch = [&](const BatchInfo& b) {
      auditor.check(b);
      logs[i].push_back(log_line(i, fold.test_subject, stage, b));
    };

    TrainConfig tc = cfg.train;
    tc.seed = fold_seed(cfg.seed, fold.test_subject);
    tc.augment.seed = tc.seed;
    const bool fdl = tc.loss.kind == LossKind::fdl;
    if (fdl) tc.loss.kind = LossKind::pearson;
    TrainResult unet = train_fold(train, tc, cfg.unet, hooks);

    const std::map<std::string, std::string> meta = {
        {"config_hash", hash},
        {"loss", to_string(cfg.train.loss.kind)},
        {"fold", std::to_string(i)},
        {"test_subject", fold.test_subject}};
    save_checkpoint(checkpoint_path(cfg.out_dir, fold.test_subject, false), unet.params, meta);
    double final_loss = unet.epoch_losses.back();

    if (fdl) {
      stage = "hr_estimator";
      TrainConfig fc = cfg.fdl_train;
      fc.seed = tc.seed;
      fc.augment.seed = tc.seed;
      TrainResult est = train_fdl_stage2(unet.params, train, fc, cfg.hr, hooks);
      save_checkpoint(checkpoint_path(cfg.out_dir, fold.test_subject, true), est.params, meta);
      if (!est.epoch_losses.empty()) final_loss = est.epoch_losses.back();
    }
    summary.test_subjects[i] = fold.test_subject;
    summary.final_losses[i] = final_loss;
    summary.audited_batches[i] = auditor.batches_checked();
  });

  {
    auto os = open_out(cfg.out_dir / "train_log.jsonl");
    ordered_json head;
    head["config_hash"] = hash;
    head["seed"] = cfg.seed;
    head["config"] = ordered_json::parse(cfg.to_json());
    os << head.dump() << "\n";
    for (const auto& fold_log : logs) {
      for (const auto& line : fold_log) os << line << "\n";
    }
  }
  ordered_json s;
  s["config_hash"] = hash;
  s["loss"] = to_string(cfg.train.loss.kind);
  for (std::size_t i = 0; i < n; ++i) {
    s["folds"].push_back({{"test_subject", summary.test_subjects[i]},
                          {"final_epoch_loss", summary.final_losses[i]},
                          {"audited_batches", summary.audited_batches[i]}});
  }
  open_out(cfg.out_dir / "train_summary.json") << s.dump(2) << "\n";
  return summary;
}

EvalSummary cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  require_out_dir(cfg.out_dir);
  const auto sessions = load_for(cfg);
  const auto subjects = by_subject(sessions);
  const auto ids = keys(subjects);
  const FoldPlan plan = loso_split(ids);
  plan.validate(ids);
  const std::string hash = cfg.hash();

  // condition -> subject -> track
  std::vector<std::vector<HrTrack>> fold_tracks(plan.folds.size());
  std::vector<std::string> methods(plan.folds.size());
  for_each_fold(plan.folds.size(), cfg.jobs, [&](std::size_t i) {
    const Fold& fold = plan.folds[i];
    const auto unet_path = checkpoint_path(cfg.out_dir, fold.test_subject, false);
    if (!fs::exists(unet_path)) {
      throw Error(ErrorCode::MissingCheckpoint, "fold " + std::to_string(i) + " (test subject " +
                                                    fold.test_subject + "): " + unet_path.string());
    }
    std::map<std::string, std::string> meta;
    FoldModel model;
    model.unet = load_checkpoint(unet_path, &meta);
    model.kind = parse_loss_kind(meta.at("loss"));
    if (model.kind == LossKind::fdl) {
      const auto est_path = checkpoint_path(cfg.out_dir, fold.test_subject, true);
      if (!fs::exists(est_path)) {
        throw Error(ErrorCode::MissingCheckpoint, "fold " + std::to_string(i) + " (test subject " +
                                                      fold.test_subject + "): " + est_path.string());
      }
      model.hr_estimator = load_checkpoint(est_path);
    }
    methods[i] = meta.at("loss");
    RunConfig local = cfg;
    local.train.loss.kind = model.kind;

    for (const Session* s : subjects.at(fold.test_subject).sessions) {
      const auto windows = method_windows(*s, local);
      HrTrack track;
      track.subject_id = fold.test_subject;
      track.condition = condition_of(*s);
      std::vector<std::vector<double>> waves;
      for (const auto& w : windows) {
        track.times.push_back(static_cast<double>(w.start_frame + w.label_offset) / cfg.windowing.fps);
        track.est_hr.push_back(predict_hr(model, w, local));
        track.label_hr.push_back(w.label_hr);
        if (cfg.emit_spectrograms) waves.push_back(predict_waveform(model, w, local));
      }
      if (cfg.emit_spectrograms) {
        auto sg = spectrogram(waves, cfg.windowing.fps, cfg.band, cfg.windowing.stride);
        const auto stem = track.subject_id + "_" + track.condition;
        fs::create_directories(cfg.out_dir / "spectrograms");
        write_spectrogram_ppm(cfg.out_dir / "spectrograms" / (stem + ".ppm"), sg, "config_hash=" + hash);
        write_spectrogram_csv(cfg.out_dir / "spectrograms" / (stem + ".csv"), sg, "config_hash=" + hash);
      }
      fold_tracks[i].push_back(std::move(track));
    }
  });

  const std::set<std::string> method_set(methods.begin(), methods.end());
  if (method_set.size() != 1) throw Error(ErrorCode::BadConfig, "folds were trained with different losses");
  const std::string method = *method_set.begin();

  EvalSummary summary;
  std::map<std::string, std::map<std::string, SubjectMetrics>> per_condition;
  fs::create_directories(cfg.out_dir / "tracks");
  for (auto& tracks : fold_tracks) {
    for (auto& t : tracks) {
      per_condition[t.condition][t.subject_id] = subject_metrics(t);
      const auto stem = t.subject_id + "_" + t.condition;
      {
        auto os = open_out(cfg.out_dir / "tracks" / (stem + ".csv"));
        os << "# config_hash=" << hash << "\n";
        write_track_csv(os, t);
      }
      if (cfg.emit_plots) {
        fs::create_directories(cfg.out_dir / "plots");
        write_hr_track_svg(cfg.out_dir / "plots" / (stem + "_hr.svg"), t, "config_hash=" + hash);
      }
      summary.tracks.push_back(std::move(t));
    }
  }
  for (const auto& [cond, subj] : per_condition) summary.reports.push_back(aggregate(subj, cond, method));

  {
    auto os = open_out(cfg.out_dir / "report.csv");
    os << "# config_hash=" << hash << " seed=" << cfg.seed << "\n";
    write_csv(os, summary.reports);
  }
  {
    auto os = open_out(cfg.out_dir / "report.txt");
    os << "# config_hash=" << hash << " seed=" << cfg.seed << "\n";
    os << "HR estimation results (mean +- std over subjects)\n\n";
    write_table(os, summary.reports);
    os << "\nPer subject\n";
    for (const auto& r : summary.reports) {
      for (const auto& [id, m] : r.per_subject) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-20s %-6s PTE6 %6.1f  RMSE %6.2f  MAE %6.2f  windows %zu\n",
                      r.condition.c_str(), id.c_str(), m.pte6, m.rmse, m.mae, m.windows);
        os << buf;
      }
    }
  }
  return summary;
}

std::vector<EvalReport> read_report_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::string line;
  std::map<std::pair<std::string, std::string>, EvalReport> reports;
  std::vector<std::pair<std::string, std::string>> order;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw Error(ErrorCode::Io, path.string() + ": malformed report row");
    const auto key = std::make_pair(f[0], f[1]);
    if (!reports.contains(key)) order.push_back(key);
    EvalReport& r = reports[key];
    r.condition = f[0];
    r.method = f[1];
    if (f[2] == "ALL_mean" || f[2] == "ALL_std") continue;
    r.per_subject[f[2]] = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5]),
                           static_cast<std::size_t>(std::stoull(f[6]))};
  }
  std::vector<EvalReport> out;
  for (const auto& key : order) {
    const auto& r = reports.at(key);
    out.push_back(aggregate(r.per_subject, r.condition, r.method));
  }
  return out;
}

void cmd_report(const std::vector<fs::path>& report_csvs, const fs::path& out_file) {
  if (report_csvs.empty()) throw Error(ErrorCode::BadConfig, "report needs at least one report.csv");
  std::vector<EvalReport> all;
  for (const auto& p : report_csvs) {
    auto r = read_report_csv(p);
    all.insert(all.end(), r.begin(), r.end());
  }
  std::ostringstream os;
  write_table(os, all);
  if (out_file.empty()) {
    std::fputs(os.str().c_str(), stdout);
  } else {
    open_out(out_file) << os.str();
  }
}

}  // namespace ippg
