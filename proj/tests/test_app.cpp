#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ippg/app.hpp"
#include "ippg/error.hpp"
#include "ippg/plots.hpp"
#include "ippg/spectral.hpp"

using namespace ippg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

// Three short subjects and a tiny network, so a full LOSO run takes seconds.
RunConfig small_config(const fs::path& data, const fs::path& out) {
  RunConfig cfg;
  cfg.synth.n_subjects = 3;
  cfg.synth.duration = 15;
  cfg.unet.base_channels = 4;
  cfg.unet.levels = 2;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 16;
  cfg.fdl_train.epochs = 1;
  cfg.data_root = data;
  cfg.out_dir = out;
  cfg.deterministic = true;
  cfg.finalize();
  return cfg;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ippg::Error");
  return ErrorCode::Io;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IPPG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_SUITE("app") {

TEST_CASE("plot writers") {
  TempDir tmp("ippg_app_plots");
  std::vector<std::vector<double>> waves;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> w(300);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(2.0 * 3.141592653589793 * 1.2 * static_cast<double>(i) / 30.0 + k);
    waves.push_back(w);
  }
  const auto sg = spectrogram(waves, 30.0, {}, 10);
  write_spectrogram_ppm(tmp.path / "s.ppm", sg, "config_hash=abc");
  write_spectrogram_csv(tmp.path / "s.csv", sg);
  const std::string ppm = slurp(tmp.path / "s.ppm");
  const std::string head = "P6\n# config_hash=abc\n4 " + std::to_string(sg.freqs.size()) + "\n255\n";
  CHECK(ppm.rfind(head, 0) == 0);
  CHECK(ppm.size() == head.size() + 3 * 4 * sg.freqs.size());
  const std::string csv = slurp(tmp.path / "s.csv");
  CHECK(csv.rfind("time_s,bpm_48", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  HrTrack t;
  t.subject_id = "S01";
  t.condition = "garage_still";
  t.times = {0, 1, 2};
  t.est_hr = {70, 72, 75};
  t.label_hr = {71, 71, 74};
  write_hr_track_svg(tmp.path / "t.svg", t, "config_hash=abc");
  const std::string svg = slurp(tmp.path / "t.svg");
  CHECK(svg.find("<!-- config_hash=abc -->") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("commands refuse a missing output directory") {
  TempDir tmp("ippg_app_missing");
  auto cfg = small_config(tmp.path / "data", tmp.path / "nope");
  CHECK(code_of([&] { cmd_synth(cfg); }) == ErrorCode::Io);
  CHECK(code_of([&] { cmd_train(cfg); }) == ErrorCode::Io);
  CHECK(code_of([&] { cmd_eval(cfg); }) == ErrorCode::Io);
  CHECK_FALSE(fs::exists(tmp.path / "nope"));
}

TEST_CASE("invalid config fails before anything is written") {
  TempDir tmp("ippg_app_badcfg");
  fs::create_directories(tmp.path / "out");
  auto cfg = small_config(tmp.path / "data", tmp.path / "out");
  cfg.band.low = 200.0;
  CHECK(code_of([&] { cmd_train(cfg); }) == ErrorCode::BadConfig);
  CHECK(fs::is_empty(tmp.path / "out"));
}

TEST_CASE("empty condition filter reports NoSessions") {
  TempDir tmp("ippg_app_nosess");
  auto cfg = small_config(tmp.path, tmp.path);
  cmd_synth(cfg);
  cfg.filter.scenario = Scenario::driving;
  CHECK(code_of([&] { cmd_train(cfg); }) == ErrorCode::NoSessions);
}

TEST_CASE("train, eval and report end to end") {
  TempDir tmp("ippg_app_e2e");
  const fs::path data = tmp.path / "data", out = tmp.path / "out";
  fs::create_directories(data);
  fs::create_directories(out);
  cmd_synth(small_config(data, data));
  CHECK(fs::exists(data / "synth_meta.json"));
  auto cfg = small_config(data, out);

  const auto ts = cmd_train(cfg);
  REQUIRE(ts.test_subjects.size() == 3);
  CHECK(count_files(out / "checkpoints", ".ckpt") == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ts.audited_batches[i] > 0);

  const std::string hash = cfg.hash();
  const std::string log = slurp(out / "train_log.jsonl");
  CHECK(log.find("\"config_hash\":\"" + hash + "\"") != std::string::npos);
  CHECK(slurp(out / "train_summary.json").find(hash) != std::string::npos);

  cfg.emit_spectrograms = true;
  cfg.emit_plots = true;
  const auto es = cmd_eval(cfg);
  REQUIRE(es.reports.size() == 1);
  const auto& r = es.reports[0];
  CHECK(r.condition == "garage_still");
  CHECK(r.method == "pearson");
  CHECK(r.per_subject.size() == 3);
  CHECK(r.pte6.mean >= 0.0);
  CHECK(r.rmse.mean >= 0.0);
  CHECK(r.mae.mean >= 0.0);
  CHECK(count_files(out / "spectrograms", ".ppm") == 3);
  CHECK(count_files(out / "plots", ".svg") == 3);
  CHECK(count_files(out / "tracks", ".csv") == 3);
  for (const char* sub : {"spectrograms", "plots", "tracks"}) {
    for (const auto& e : fs::directory_iterator(out / sub)) {
      CHECK(slurp(e.path()).find("config_hash=" + hash) != std::string::npos);
    }
  }

  const std::string csv = slurp(out / "report.csv");
  CHECK(csv.rfind("# config_hash=" + hash, 0) == 0);
  CHECK(slurp(out / "report.txt").find(hash) != std::string::npos);

  // Re-running eval gives the same bytes.
  cmd_eval(cfg);
  CHECK(slurp(out / "report.csv") == csv);

  // The report round-trips through its CSV.
  const auto back = read_report_csv(out / "report.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].pte6.mean == doctest::Approx(r.pte6.mean).epsilon(1e-6));
  CHECK(back[0].mae.std == doctest::Approx(r.mae.std).epsilon(1e-6));
  cmd_report({out / "report.csv", out / "report.csv"}, tmp.path / "combined.txt");
  CHECK(slurp(tmp.path / "combined.txt").find("garage_still") != std::string::npos);

  // A missing fold checkpoint names the fold.
  fs::remove(checkpoint_path(out, ts.test_subjects[1], false));
  try {
    cmd_eval(cfg);
    FAIL("expected MissingCheckpoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingCheckpoint);
    CHECK(std::string(e.what()).find("fold 1") != std::string::npos);
    CHECK(std::string(e.what()).find(ts.test_subjects[1]) != std::string::npos);
  }
}

TEST_CASE("window-shifting variants configure their windows") {
  TempDir tmp("ippg_app_ws");
  auto cfg = small_config(tmp.path, tmp.path);
  cmd_synth(cfg);
  const auto sessions = load_dataset(tmp.path);
  REQUIRE(!sessions.empty());

  cfg.train.loss.kind = LossKind::ws2;
  cfg.finalize();
  const auto ext = method_windows(sessions[0], cfg);
  REQUIRE(!ext.empty());
  for (const auto& w : ext) {
    CHECK(w.input.cols() == 350);
    CHECK(w.label.size() == 300);
    CHECK(w.label_offset == 25);
  }

  cfg.train.loss.kind = LossKind::ws1;
  cfg.train.loss.max_shift = 15;
  cfg.finalize();
  for (const auto& w : method_windows(sessions[0], cfg)) CHECK(w.input.cols() == 300);
  CHECK(cfg.to_json().find("\"kind\":\"ws1\",\"max_shift\":15") != std::string::npos);
  const auto before = cfg.hash();
  cfg.train.loss.max_shift = 10;
  cfg.finalize();
  CHECK(cfg.hash() != before);
}

TEST_CASE("ws2 and fdl runs train and evaluate") {
  TempDir tmp("ippg_app_methods");
  const fs::path data = tmp.path / "data";
  fs::create_directories(data);
  auto base = small_config(data, data);
  cmd_synth(base);
  for (auto kind : {LossKind::ws2, LossKind::fdl}) {
    const fs::path out = tmp.path / to_string(kind);
    fs::create_directories(out);
    auto cfg = small_config(data, out);
    cfg.train.loss.kind = kind;
    cfg.finalize();
    cmd_train(cfg);
    CHECK(count_files(out / "checkpoints", ".ckpt") == (kind == LossKind::fdl ? 6u : 3u));
    const auto es = cmd_eval(cfg);
    REQUIRE(es.reports.size() == 1);
    CHECK(es.reports[0].method == to_string(kind));
    if (kind == LossKind::fdl) {
      fs::remove(checkpoint_path(out, es.tracks[0].subject_id, true));
      CHECK(code_of([&] { cmd_eval(cfg); }) == ErrorCode::MissingCheckpoint);
    }
  }
}

TEST_CASE("cli exit codes, config file and environment") {
  TempDir tmp("ippg_app_cli");
  const std::string root = tmp.path.string();
  CHECK(run_cli("synth --out " + root + "/missing") == 2);
  CHECK(run_cli("bogus") != 0);
  CHECK(run_cli("train --loss nonsense --out " + root) != 0);

  fs::create_directories(tmp.path / "a");
  fs::create_directories(tmp.path / "b");
  CHECK(run_cli("synth --subjects 2 --duration 12 --seed 5 --out " + root + "/a") == 0);
  {
    std::ofstream ini(tmp.path / "synth.ini");
    ini << "[synth]\nsubjects=2\nduration=12\nseed=5\n";
  }
  const std::string env_cmd = "IPPG_OUT=" + root + "/b " + std::string(IPPG_CLI_PATH) +
                              " --config " + root + "/synth.ini synth > /dev/null 2>&1";
  CHECK(std::system(env_cmd.c_str()) == 0);
  for (const auto& e : fs::recursive_directory_iterator(tmp.path / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), tmp.path / "a");
    CHECK(slurp(e.path()) == slurp(tmp.path / "b" / rel));
  }

  fs::create_directories(tmp.path / "out");
  const std::string common = " --data-root " + root + "/a --out " + root +
                             "/out --base-channels 4 --levels 2 --deterministic";
  CHECK(run_cli("train --epochs 1 --batch-size 16" + common) == 0);
  CHECK(run_cli("eval" + common) == 0);
  CHECK(fs::exists(tmp.path / "out" / "report.csv"));
  CHECK(run_cli("report " + root + "/out/report.csv --out " + root + "/table.txt") == 0);
  CHECK(slurp(tmp.path / "table.txt").find("PTE6") != std::string::npos);
  CHECK(run_cli("eval --scenario driving" + common) == 2);
}

}  // TEST_SUITE
