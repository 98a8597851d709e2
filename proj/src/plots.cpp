#include "ippg/plots.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "ippg/error.hpp"

namespace ippg {

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return os;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Black -> red -> yellow -> white.
std::array<unsigned char, 3> heat(double x) {
  x = std::clamp(x, 0.0, 1.0);
  const auto c = [](double v) { return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
  return {c(3.0 * x), c(3.0 * x - 1.0), c(3.0 * x - 2.0)};
}

}  // namespace

void write_hr_track_svg(const std::filesystem::path& path, const HrTrack& track,
                        const std::string& note) {
  track.validate();
  constexpr double w = 800, h = 300, margin = 40;
  const double t0 = track.times.empty() ? 0.0 : track.times.front();
  const double t1 = track.times.empty() ? static_cast<double>(track.size()) : track.times.back();
  double lo = 40, hi = 120;
  for (std::size_t i = 0; i < track.size(); ++i) {
    lo = std::min({lo, track.est_hr[i], track.label_hr[i]});
    hi = std::max({hi, track.est_hr[i], track.label_hr[i]});
  }
  auto x_of = [&](std::size_t i) {
    const double t = track.times.empty() ? static_cast<double>(i) : track.times[i];
    return margin + (w - 2 * margin) * (t1 > t0 ? (t - t0) / (t1 - t0) : 0.0);
  };
  auto y_of = [&](double bpm) { return h - margin - (h - 2 * margin) * (bpm - lo) / (hi - lo); };
  auto polyline = [&](const std::vector<double>& v, const char* colour) {
    std::string pts;
    for (std::size_t i = 0; i < v.size(); ++i) pts += fmt(x_of(i)) + "," + fmt(y_of(v[i])) + " ";
    return "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" +
           pts + "\"/>\n";
  };

  auto os = open_out(path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  if (!note.empty()) os << "<!-- " << note << " -->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">" << track.subject_id << " "
     << track.condition << " (black: reference, red: estimate)</text>\n";
  os << "<text x=\"4\" y=\"" << fmt(y_of(hi)) << "\" font-size=\"10\">" << fmt(hi) << "</text>\n";
  os << "<text x=\"4\" y=\"" << fmt(y_of(lo)) << "\" font-size=\"10\">" << fmt(lo) << "</text>\n";
  os << polyline(track.label_hr, "black");
  os << polyline(track.est_hr, "red");
  os << "</svg>\n";
}

void write_spectrogram_ppm(const std::filesystem::path& path, const Spectrogram& sg,
                           const std::string& note) {
  const std::size_t cols = sg.spectra.rows();
  const std::size_t rows = sg.spectra.cols();
  auto os = open_out(path, true);
  os << "P6\n";
  if (!note.empty()) os << "# " << note << "\n";
  os << cols << " " << rows << "\n255\n";
  for (std::size_t r = rows; r-- > 0;) {
    for (std::size_t c = 0; c < cols; ++c) {
      // Each window normalised to its own peak, as in per-window HR picking.
      const auto spectrum = sg.spectra.row(c);
      const double peak = *std::max_element(spectrum.begin(), spectrum.end());
      const auto px = heat(peak > 0.0 ? spectrum[r] / peak : 0.0);
      os.write(reinterpret_cast<const char*>(px.data()), 3);
    }
  }
}

void write_spectrogram_csv(const std::filesystem::path& path, const Spectrogram& sg,
                           const std::string& note) {
  auto os = open_out(path);
  if (!note.empty()) os << "# " << note << "\n";
  os << "time_s";
  for (double f : sg.freqs) os << ",bpm_" << fmt(f);
  os << "\n";
  for (std::size_t k = 0; k < sg.spectra.rows(); ++k) {
    os << fmt(sg.times[k]);
    for (double m : sg.spectra.row(k)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.6g", m);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace ippg
