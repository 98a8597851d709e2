#include "ippg/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ippg/error.hpp"

namespace fs = std::filesystem;

namespace ippg {

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return is;
}

// Shortest text that parses back to the same double.
void put_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::vector<double> parse_row(const std::string& line, const fs::path& path, std::size_t lineno) {
  std::vector<double> vals;
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    double v = 0.0;
    const auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    vals.push_back(v);
    p = res.ptr;
    if (p < end && *p == ',') ++p;
    if (p < end && *p == '\r') break;
  }
  return vals;
}

std::string roi_header() {
  std::string h = "frame";
  char buf[16];
  for (std::size_t r = 0; r < kRoiCount; ++r) {
    std::snprintf(buf, sizeof buf, ",roi_%02zu", r);
    h += buf;
  }
  return h;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void write_manifest(const fs::path& path, const SessionManifest& m) {
  nlohmann::ordered_json j;
  j["subject_id"] = m.subject_id;
  j["scenario"] = to_string(m.scenario);
  j["motion"] = to_string(m.motion);
  j["fps"] = m.fps;
  j["trace_path"] = m.trace_path;
  j["label_path"] = m.label_path;
  j["label_fps"] = m.label_fps;
  open_out(path) << j.dump(2) << "\n";
}

SessionManifest read_manifest(const fs::path& path) {
  auto is = open_in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
    SessionManifest m;
    m.subject_id = j.at("subject_id").get<std::string>();
    m.scenario = parse_scenario(j.at("scenario").get<std::string>());
    m.motion = parse_motion(j.at("motion").get<std::string>());
    m.fps = j.at("fps").get<double>();
    m.trace_path = j.at("trace_path").get<std::string>();
    m.label_path = j.at("label_path").get<std::string>();
    m.label_fps = j.at("label_fps").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

void write_traces_csv(const fs::path& path, const Matrix& traces) {
  if (traces.rows() != kRoiCount) throw Error(ErrorCode::ShapeMismatch, "expected 23 ROI rows");
  std::string out = roi_header() + "\n";
  for (std::size_t t = 0; t < traces.cols(); ++t) {
    out += std::to_string(t);
    for (std::size_t r = 0; r < traces.rows(); ++r) {
      out += ',';
      put_double(out, traces(r, t));
    }
    out += '\n';
  }
  open_out(path) << out;
}

Matrix read_traces_csv(const fs::path& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || trim_cr(line) != roi_header()) {
    throw Error(ErrorCode::Io, path.string() + ": unexpected trace header");
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto vals = parse_row(line, path, lineno);
    if (vals.size() != kRoiCount + 1) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": expected 24 columns");
    }
    rows.push_back(std::move(vals));
  }
  Matrix m(kRoiCount, rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t r = 0; r < kRoiCount; ++r) m(r, t) = rows[t][r + 1];
  }
  return m;
}

void write_label_csv(const fs::path& path, std::span<const double> samples) {
  std::string out = "sample,ppg\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    put_double(out, samples[i]);
    out += '\n';
  }
  open_out(path) << out;
}

std::vector<double> read_label_csv(const fs::path& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || trim_cr(line) != "sample,ppg") {
    throw Error(ErrorCode::Io, path.string() + ": unexpected label header");
  }
  std::vector<double> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto vals = parse_row(line, path, lineno);
    if (vals.size() != 2) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": expected 2 columns");
    }
    out.push_back(vals[1]);
  }
  return out;
}

void write_session(const fs::path& dir, const SessionManifest& m, const Matrix& traces,
                   std::span<const double> raw_label) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_traces_csv(dir / m.trace_path, traces);
  write_label_csv(dir / m.label_path, raw_label);
  write_manifest(dir / kManifestName, m);
}

Session load_session(const fs::path& manifest_path) {
  Session s;
  s.manifest = read_manifest(manifest_path);
  s.dir = manifest_path.parent_path();
  s.traces.subject_id = s.manifest.subject_id;
  s.traces.scenario = s.manifest.scenario;
  s.traces.motion = s.manifest.motion;
  s.traces.fps = s.manifest.fps;
  s.traces.traces = read_traces_csv(s.dir / s.manifest.trace_path);
  const auto raw = read_label_csv(s.dir / s.manifest.label_path);
  if (s.manifest.label_fps == 2.0 * s.manifest.fps) {
    s.label = downsample_label(raw);
  } else if (s.manifest.label_fps == s.manifest.fps) {
    s.label.samples = raw;
    s.label.fps = s.manifest.fps;
  } else {
    throw Error(ErrorCode::BadConfig, manifest_path.string() + ": label_fps must be 30 or 60");
  }
  s.traces.validate(0);
  return s;
}

std::vector<Session> load_dataset(const fs::path& root, const SessionFilter& filter) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, root.string() + " is not a directory");
  std::vector<fs::path> manifests;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == kManifestName) manifests.push_back(e.path());
  }
  std::sort(manifests.begin(), manifests.end());
  std::vector<Session> out;
  for (const auto& p : manifests) {
    const SessionManifest m = read_manifest(p);
    if (filter.scenario && m.scenario != *filter.scenario) continue;
    if (filter.motion && m.motion != *filter.motion) continue;
    out.push_back(load_session(p));
  }
  return out;
}

}  // namespace ippg
