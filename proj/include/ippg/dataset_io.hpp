#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ippg/signal_core.hpp"

namespace ippg {

// Session manifest (manifest.json inside a session directory). Paths are
// relative to the manifest's directory.
struct SessionManifest {
  std::string subject_id;
  Scenario scenario = Scenario::garage;
  Motion motion = Motion::still;
  double fps = kFrameRate;
  std::string trace_path = "traces.csv";
  std::string label_path = "label.csv";
  double label_fps = 60.0;
};

struct Session {
  SessionManifest manifest;
  RoiTraceMatrix traces;
  PulseLabel label;  // at 30 fps
  std::filesystem::path dir;
};

inline constexpr const char* kManifestName = "manifest.json";

void write_manifest(const std::filesystem::path& path, const SessionManifest& m);
SessionManifest read_manifest(const std::filesystem::path& path);

// traces.csv: header frame,roi_00,...,roi_22; one row per frame.
void write_traces_csv(const std::filesystem::path& path, const Matrix& traces);
Matrix read_traces_csv(const std::filesystem::path& path);

// label.csv: header sample,ppg.
void write_label_csv(const std::filesystem::path& path, std::span<const double> samples);
std::vector<double> read_label_csv(const std::filesystem::path& path);

// Writes manifest + both CSV files into dir (created if needed).
void write_session(const std::filesystem::path& dir, const SessionManifest& m,
                   const Matrix& traces, std::span<const double> raw_label);

// Loads a session, downsampling 60 fps labels to the video rate.
Session load_session(const std::filesystem::path& manifest_path);

struct SessionFilter {
  std::optional<Scenario> scenario;
  std::optional<Motion> motion;
};

// All sessions under root (any depth), sorted by directory, after filtering.
std::vector<Session> load_dataset(const std::filesystem::path& root,
                                  const SessionFilter& filter = {});

}  // namespace ippg
