// Acceptance checks for the whole pipeline. Prints one PASS/FAIL line per
// criterion and exits non-zero if any fails. Pass criterion numbers to run a
// subset, e.g. `ippg_acceptance 1 3`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ippg/app.hpp"
#include "ippg/error.hpp"
#include "ippg/evaluator.hpp"
#include "ippg/losses.hpp"
#include "ippg/signal_core.hpp"
#include "ippg/spectral.hpp"
#include "ippg/synthgen.hpp"
#include "ippg/trainer.hpp"
#include "ippg/unet_model.hpp"
#include "oracles.hpp"

using namespace ippg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed sub-checks so the summary line can say which one broke.
struct Checker {
  Outcome out;
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      out.pass = false;
      if (!out.detail.empty()) out.detail += "; ";
      out.detail += what;
    }
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Matrix random_input(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : m.flat()) v = n(rng);
  return m;
}

void jitter_biases(ModelParams& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (const auto& l : p.layers) {
    for (std::size_t i = 0; i < l.conv.out_ch; ++i) p.values[l.bias_offset + i] = u(rng);
  }
}

// 1: analytic gradients of every loss through the networks vs central differences.
Outcome gradients() {
  Checker c;
  std::mt19937_64 rng(2024);
  UnetSpec spec;
  spec.levels = 2;
  spec.base_channels = 3;
  spec.kernel_len = 3;
  auto unet = init_params(spec, 5);
  jitter_biases(unet, rng);

  double worst = 0.0;
  for (LossKind kind : {LossKind::pearson, LossKind::ws1, LossKind::ws2}) {
    LossConfig loss;
    loss.kind = kind;
    loss.max_shift = 6;
    loss.label_len = 40;
    loss.extended_len = 52;
    const std::size_t in_len = kind == LossKind::ws2 ? 52 : 40;
    std::vector<WindowPair> batch(3);
    for (auto& w : batch) {
      w.input = random_input(kRoiCount, in_len, rng);
      w.label = oracle::sinusoid(90, 40, 30.0, 1.0, 0.3);
      for (double& v : w.label) v += 0.3 * std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    std::vector<const WindowPair*> ptrs;
    for (const auto& w : batch) ptrs.push_back(&w);
    const auto batch_loss = [&](std::span<const double> v) {
      ModelParams q = unet;
      q.values.assign(v.begin(), v.end());
      double total = 0.0;
      for (const auto& w : batch) total += loss_value(loss, unet_forward(q, w.input, Exec::reference), w.label);
      return total / static_cast<double>(batch.size());
    };
    const auto num = oracle::numeric_gradient(batch_loss, unet.values);
    for (Exec exec : {Exec::reference, Exec::parallel}) {
      std::vector<double> g(unet.size());
      unet_batch_gradient(unet, ptrs, loss, g, exec);
      const double e = oracle::max_rel_error(g, num);
      worst = std::max(worst, e);
      c.expect(e < 1e-4, "U-net " + to_string(kind) + fmt(" rel err %.2e", e));
    }
  }

  HrEstimatorSpec hspec;
  hspec.channels = {3, 4};
  hspec.kernel_len = 5;
  hspec.input_len = 30;
  hspec.output_scale = 2.0;
  auto est = init_params(hspec, 6);
  jitter_biases(est, rng);
  std::vector<std::vector<double>> waves(4);
  std::vector<double> labels(4);
  for (std::size_t i = 0; i < 4; ++i) {
    waves[i] = oracle::random_vector(30, rng);
    labels[i] = 50.0 + 25.0 * static_cast<double>(i);
  }
  const auto fdl_of = [&](std::span<const double> v) {
    ModelParams q = est;
    q.values.assign(v.begin(), v.end());
    std::vector<double> y(4);
    for (std::size_t i = 0; i < 4; ++i) y[i] = hr_estimator_forward(q, waves[i], Exec::reference);
    return fdl_loss(y, labels);
  };
  const auto num = oracle::numeric_gradient(fdl_of, est.values);
  for (Exec exec : {Exec::reference, Exec::parallel}) {
    std::vector<HrTape> tapes(4);
    std::vector<double> y(4);
    for (std::size_t i = 0; i < 4; ++i) y[i] = hr_estimator_forward(est, waves[i], tapes[i], exec);
    const auto up = loss_gradient({.kind = LossKind::fdl}, y, labels);
    std::vector<double> g(est.size(), 0.0);
    for (std::size_t i = 0; i < 4; ++i) hr_estimator_backward(est, tapes[i], up[i], g, exec);
    const double e = oracle::max_rel_error(g, num);
    worst = std::max(worst, e);
    c.expect(e < 1e-4, fmt("HR estimator fdl rel err %.2e", e));
  }
  if (c.out.pass) c.out.detail = fmt("worst rel err %.2e over pearson/ws1/ws2/fdl", worst);
  return c.out;
}

// 2: every on-bin frequency comes back exactly.
Outcome spectral_exactness() {
  Checker c;
  std::size_t n = 0;
  for (int f = 48; f <= 180; f += 6) {
    for (double phase : {0.0, 0.7, 2.1}) {
      const double hr = estimate_hr(oracle::sinusoid(f, 300, 30.0, 1.0, phase), 30.0, {});
      c.expect(hr == static_cast<double>(f), fmt("%d bpm -> %.3f", f, hr));
      ++n;
    }
  }
  if (c.out.pass) c.out.detail = fmt("%zu sinusoids, 48..180 bpm", n);
  return c.out;
}

// 3: loss identities.
Outcome loss_identities() {
  Checker c;
  std::mt19937_64 rng(3);
  auto y = oracle::sinusoid(78, 300, 30.0, 1.0, 0.4);
  for (double& v : y) v += 0.2 * std::normal_distribution<double>(0.0, 1.0)(rng);
  c.expect(std::abs(neg_pearson(y, y) + 1.0) < 1e-12, "neg_pearson(y,y) != -1");

  for (int t = 0; t < 20; ++t) {
    const auto a = oracle::random_vector(300, rng), b = oracle::random_vector(300, rng);
    const auto r = ws1_loss(a, b, 0);
    c.expect(r.value == neg_pearson(a, b), "ws1 max_shift 0 differs from neg_pearson");
    LossConfig ws1{.kind = LossKind::ws1, .max_shift = 0};
    c.expect(loss_gradient(ws1, a, b) == neg_pearson_gradient(a, b), "ws1 max_shift 0 gradient differs");
  }

  for (std::size_t d = 0; d <= 15; ++d) {
    // est lags the label by d frames, and the other way round.
    std::vector<double> late(300), early(300);
    const auto base = oracle::random_vector(330, rng);
    for (std::size_t k = 0; k < 300; ++k) {
      late[k] = base[15 + k - d];
      early[k] = base[15 + k + d];
    }
    const std::span<const double> label(base.data() + 15, 300);
    const double v1 = ws1_loss(late, label, 15).value, v2 = ws1_loss(early, label, 15).value;
    c.expect(std::abs(v1 + 1.0) < 1e-9 && std::abs(v2 + 1.0) < 1e-9, fmt("ws1 delay %zu", d));
  }

  const auto label = oracle::random_vector(300, rng);
  for (std::size_t o = 0; o <= 50; ++o) {
    auto est = oracle::random_vector(350, rng);
    std::copy(label.begin(), label.end(), est.begin() + static_cast<std::ptrdiff_t>(o));
    const auto r = ws2_loss(est, label);
    double best = 1e300;
    std::size_t arg = 0;
    for (std::size_t k = 0; k <= 50; ++k) {
      const double v = -oracle::pearson(std::span<const double>(est).subspan(k, 300), label);
      if (v < best) {
        best = v;
        arg = k;
      }
    }
    c.expect(std::abs(r.value + 1.0) < 1e-9 && r.offset == o && arg == o && std::abs(r.value - best) < 1e-12,
             fmt("ws2 offset %zu", o));
  }
  if (c.out.pass) c.out.detail = "pearson, ws1 shifts 0..15 both ways, ws2 offsets 0..50";
  return c.out;
}

HrTrack track_from(const std::vector<double>& err) {
  HrTrack t;
  for (double e : err) {
    t.label_hr.push_back(80.0);
    t.est_hr.push_back(80.0 + e);
  }
  return t;
}

// 4: metric oracles.
Outcome metric_oracles() {
  Checker c;
  c.expect(pte6(track_from({2, 5.9, 6.0, 10})) == 50.0, "PTE6 {2,5.9,6,10} != 50");
  c.expect(pte6(track_from({6, -6})) == 0.0, "PTE6 at exactly 6 bpm");
  c.expect(std::abs(rmse(track_from({3, 4})) - std::sqrt(12.5)) < 1e-12, "RMSE {3,4}");
  c.expect(mae(track_from({3, -4})) == 3.5, "MAE {3,-4}");
  c.expect(mae(track_from({0, 0})) == 0.0 && rmse(track_from({0, 0})) == 0.0, "zero error");
  const auto agg = aggregate({{"A", {80, 1, 1, 10}}, {"B", {90, 1, 1, 10}}});
  c.expect(agg.pte6.mean == 85.0 && agg.pte6.std == 5.0, "aggregate 80/90");

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 10.0);
  std::uniform_int_distribution<int> len(1, 100);
  std::size_t bad = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> err(static_cast<std::size_t>(len(rng)));
    for (double& e : err) e = n(rng);
    const auto tr = track_from(err);
    if (!(mae(tr) <= rmse(tr) + 1e-12)) ++bad;
  }
  c.expect(bad == 0, fmt("MAE > RMSE on %zu tracks", bad));
  if (c.out.pass) c.out.detail = "hand-computed examples, MAE <= RMSE on 10^4 random tracks";
  return c.out;
}

// 5: resampling moves a 60 bpm label to 75 / 48 bpm.
Outcome augmentation_law() {
  Checker c;
  SynthSpec spec;
  spec.duration = 10;
  spec.hr_low = spec.hr_high = 60.0;
  spec.hr_drift = 0.0;
  spec.noise_std = 0.0;
  spec.label_noise_std = 0.0;
  const auto s = generate_subject(spec, 0);
  const auto base = make_windows(s.traces, s.label, {}, {}).at(0);
  c.expect(base.label_hr == 60.0, fmt("base label %.1f", base.label_hr));
  const auto up = resample_augment(base, 1.25, kFrameRate, {});
  const auto down = resample_augment(base, 0.8, kFrameRate, {});
  c.expect(std::abs(up.label_hr - 75.0) <= 6.0, fmt("rate 1.25 -> %.1f", up.label_hr));
  c.expect(std::abs(down.label_hr - 48.0) <= 6.0, fmt("rate 0.8 -> %.1f", down.label_hr));
  if (c.out.pass) c.out.detail = fmt("60 -> %.0f (x1.25), %.0f (x0.8)", up.label_hr, down.label_hr);
  return c.out;
}

RunConfig run_config(const fs::path& data, const fs::path& out, LossKind kind) {
  RunConfig cfg;
  cfg.data_root = data;
  cfg.out_dir = out;
  cfg.train.loss.kind = kind;
  cfg.deterministic = true;
  cfg.finalize();
  return cfg;
}

// 6: synthetic end to end at the default settings.
Outcome end_to_end() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto root = fresh_dir("ippg_accept_e2e");
  const fs::path clean = root / "clean", delayed = root / "delayed";
  fs::create_directories(clean);
  fs::create_directories(delayed);

  RunConfig synth = run_config(clean, clean, LossKind::pearson);
  synth.synth.n_subjects = 6;
  synth.synth.duration = 120;
  synth.synth.noise_std = 0.05;
  cmd_synth(synth);
  synth.out_dir = delayed;
  synth.synth.label_delay_frames = 8;
  cmd_synth(synth);

  const auto run = [&](const fs::path& data, const std::string& name, LossKind kind) {
    const fs::path out = root / name;
    fs::create_directories(out);
    const auto cfg = run_config(data, out, kind);
    const auto t = std::chrono::steady_clock::now();
    cmd_train(cfg);
    auto r = cmd_eval(cfg).reports.at(0);
    std::printf("  [6] %-16s PTE6 %5.1f +- %4.1f  RMSE %5.2f  MAE %5.2f  (%.0f s)\n", name.c_str(),
                r.pte6.mean, r.pte6.std, r.rmse.mean, r.mae.mean, seconds_since(t));
    std::fflush(stdout);
    return r;
  };
  const auto base = run(clean, "pearson", LossKind::pearson);
  const auto ws1 = run(delayed, "ws1_delayed", LossKind::ws1);
  const auto pd = run(delayed, "pearson_delayed", LossKind::pearson);
  const double elapsed = seconds_since(t0);

  c.expect(base.mae.mean < 4.0, fmt("baseline MAE %.2f >= 4", base.mae.mean));
  c.expect(base.pte6.mean > 85.0, fmt("baseline PTE6 %.1f <= 85", base.pte6.mean));
  c.expect(std::abs(ws1.pte6.mean - base.pte6.mean) <= 3.0,
           fmt("WS-1 delayed PTE6 %.1f vs baseline %.1f", ws1.pte6.mean, base.pte6.mean));
  c.expect(pd.pte6.mean <= ws1.pte6.mean,
           fmt("pearson delayed PTE6 %.1f beats WS-1 %.1f", pd.pte6.mean, ws1.pte6.mean));
  c.expect(elapsed < 900.0, fmt("runtime %.0f s >= 900 s", elapsed));
  const std::string summary =
      fmt("MAE %.2f PTE6 %.1f; delayed: WS-1 PTE6 %.1f, pearson PTE6 %.1f; %.0f s", base.mae.mean,
          base.pte6.mean, ws1.pte6.mean, pd.pte6.mean, elapsed);
  c.out.detail = c.out.pass ? summary : c.out.detail + " (" + summary + ")";
  fs::remove_all(root);
  return c.out;
}

RunConfig small_run(const fs::path& data, const fs::path& out, LossKind kind) {
  RunConfig cfg = run_config(data, out, kind);
  cfg.synth.n_subjects = 3;
  cfg.synth.duration = 20;
  cfg.unet.base_channels = 4;
  cfg.unet.levels = 2;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.train.augment.enabled = true;
  cfg.fdl_train.epochs = 2;
  cfg.jobs = 4;  // deterministic mode must override this
  cfg.finalize();
  return cfg;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

// 7: two deterministic runs give identical bytes.
Outcome reproducibility() {
  Checker c;
  const auto root = fresh_dir("ippg_accept_repro");
  std::size_t compared = 0;
  for (LossKind kind : {LossKind::ws1, LossKind::fdl}) {
    std::vector<std::map<std::string, std::string>> runs;
    for (const char* tag : {"a", "b"}) {
      const fs::path data = root / (std::string("data_") + tag), out = root / (to_string(kind) + tag);
      fs::create_directories(data);
      fs::create_directories(out);
      auto cfg = small_run(data, data, kind);
      cmd_synth(cfg);
      cfg.out_dir = out;
      cmd_train(cfg);
      cmd_eval(cfg);
      auto files = tree(out);
      for (auto& [k, v] : tree(data)) files["data/" + k] = std::move(v);
      runs.push_back(std::move(files));
    }
    c.expect(runs[0].size() == runs[1].size(), to_string(kind) + ": file sets differ");
    for (const auto& [name, bytes] : runs[0]) {
      const auto it = runs[1].find(name);
      c.expect(it != runs[1].end() && it->second == bytes, to_string(kind) + ": " + name + " differs");
      ++compared;
    }
    for (const char* must : {"train_log.jsonl", "report.csv", "report.txt", "train_summary.json"}) {
      c.expect(runs[0].contains(must), std::string("missing ") + must);
    }
  }
  fs::remove_all(root);
  if (c.out.pass) c.out.detail = fmt("%zu files byte-identical (checkpoints, logs, reports, data)", compared);
  return c.out;
}

// 8: every training batch of every fold is audited, and a leak is caught.
Outcome loso_integrity() {
  Checker c;
  const auto root = fresh_dir("ippg_accept_loso");
  const fs::path data = root / "data";
  fs::create_directories(data);
  cmd_synth(small_run(data, data, LossKind::pearson));
  std::size_t audited = 0;
  for (LossKind kind : {LossKind::pearson, LossKind::ws2, LossKind::fdl}) {
    const fs::path out = root / to_string(kind);
    fs::create_directories(out);
    const auto summary = cmd_train(small_run(data, out, kind));
    // One log line per optimizer step, after the header line.
    std::map<std::string, std::size_t> logged;
    std::ifstream log(out / "train_log.jsonl");
    std::string line;
    std::getline(log, line);
    while (std::getline(log, line)) {
      const auto at = line.find("\"test_subject\":\"");
      if (at == std::string::npos) continue;
      const auto from = at + 16;
      ++logged[line.substr(from, line.find('"', from) - from)];
    }
    c.expect(summary.test_subjects.size() == 3, to_string(kind) + ": expected 3 folds");
    for (std::size_t i = 0; i < summary.test_subjects.size(); ++i) {
      const auto& id = summary.test_subjects[i];
      c.expect(summary.audited_batches[i] > 0 && summary.audited_batches[i] == logged[id],
               to_string(kind) + ": fold " + id + fmt(" audited %zu of %zu batches",
                                                      summary.audited_batches[i], logged[id]));
      audited += summary.audited_batches[i];
    }
  }

  // Negative control: a batch holding a held-out window must be rejected.
  WindowPair leak;
  leak.subject_id = "S02";
  WindowPair fine;
  fine.subject_id = "S01";
  const std::vector<const WindowPair*> batch{&fine, &leak};
  LosoAuditor auditor("S02");
  bool caught = false;
  try {
    auditor.check({0, 0, 0.0, 0.0, batch});
  } catch (const Error&) {
    caught = true;
  }
  c.expect(caught, "leaked window not detected");
  FoldPlan bad = loso_split(std::vector<std::string>{"S01", "S02", "S03"});
  bad.folds[0].train_subjects.push_back(bad.folds[0].test_subject);
  bool plan_caught = false;
  try {
    bad.validate(std::vector<std::string>{"S01", "S02", "S03"});
  } catch (const Error&) {
    plan_caught = true;
  }
  c.expect(plan_caught, "leaking fold plan not detected");
  fs::remove_all(root);
  if (c.out.pass) c.out.detail = fmt("%zu batches audited across pearson/ws2/fdl folds, leaks rejected", audited);
  return c.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the heart-rate pipeline"};
  std::vector<int> only;
  app.add_option("criteria", only, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"spectral exactness", spectral_exactness},
      {"loss identities", loss_identities},
      {"metric oracles", metric_oracles},
      {"augmentation frequency law", augmentation_law},
      {"synthetic end-to-end", end_to_end},
      {"reproducibility", reproducibility},
      {"LOSO integrity", loso_integrity},
  };
  const std::set<int> chosen(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
