#include "ippg/signal_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ippg/error.hpp"

namespace ippg {

std::string to_string(Scenario s) { return s == Scenario::garage ? "garage" : "driving"; }
std::string to_string(Motion m) { return m == Motion::still ? "still" : "small_motion"; }

Scenario parse_scenario(const std::string& s) {
  if (s == "garage") return Scenario::garage;
  if (s == "driving") return Scenario::driving;
  throw Error(ErrorCode::BadConfig, "unknown scenario '" + s + "'");
}

Motion parse_motion(const std::string& s) {
  if (s == "still") return Motion::still;
  if (s == "small_motion") return Motion::small_motion;
  throw Error(ErrorCode::BadConfig, "unknown motion '" + s + "'");
}

void RoiTraceMatrix::validate(std::size_t min_frames) const {
  if (traces.rows() != kRoiCount) {
    throw Error(ErrorCode::ShapeMismatch, "expected 23 ROI traces, got " +
                                              std::to_string(traces.rows()));
  }
  if (fps != kFrameRate) throw Error(ErrorCode::BadConfig, "trace fps must be 30");
  if (traces.cols() < min_frames) {
    throw Error(ErrorCode::TooShort, subject_id + ": " + std::to_string(traces.cols()) +
                                         " frames < " + std::to_string(min_frames));
  }
  for (double v : traces.flat()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::BadConfig, subject_id + ": non-finite trace");
  }
}

void WindowingConfig::validate() const {
  if (window_len == 0 || stride == 0 || stride > window_len) {
    throw Error(ErrorCode::BadConfig, "windowing needs window_len > 0 and 0 < stride <= window_len");
  }
}

void AugmentConfig::validate() const {
  if (!(r_low > 0.0 && r_low <= r_high && r_high < 1.0)) {
    throw Error(ErrorCode::BadConfig, "augmentation needs 0 < r_low <= r_high < 1");
  }
}

PulseLabel downsample_label(std::span<const double> raw) {
  if (raw.empty()) throw Error(ErrorCode::EmptySignal, "raw label is empty");
  PulseLabel out;
  out.samples.reserve(raw.size() / 2);
  for (std::size_t k = 0; k < raw.size() / 2; ++k) {
    out.samples.push_back(raw[2 * k]);
  }
  out.fps = kFrameRate;
  return out;
}

std::vector<double> delay_signal(std::span<const double> x, std::size_t frames) {
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) out[n] = n >= frames ? x[n - frames] : x.front();
  return out;
}

std::size_t window_count(std::size_t frames, std::size_t window_len, std::size_t stride) {
  if (frames < window_len) return 0;
  return (frames - window_len) / stride + 1;
}

std::vector<double> normalize_window(std::span<const double> row) {
  const double n = static_cast<double>(row.size());
  const double mean = std::accumulate(row.begin(), row.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : row) ss += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(ss / n), 1e-8);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - mean) / sd;
  return out;
}

namespace {

// A label with no in-band energy resolves to the lowest in-band bin.
double label_hr_or_floor(std::span<const double> label, double fps, const BandConfig& band) {
  try {
    return estimate_hr(label, fps, band);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoSignal) throw;
    const Spectrum s = band_spectrum(label, fps, band);
    if (s.freqs.empty()) throw;
    return s.freqs.front();
  }
}

std::vector<WindowPair> windows_impl(const RoiTraceMatrix& traces, const PulseLabel& label,
                                     const WindowingConfig& cfg, const BandConfig& band,
                                     std::size_t input_len) {
  cfg.validate();
  band.validate(cfg.fps);
  const std::size_t t = traces.frames();
  if (label.samples.size() != t) {
    throw Error(ErrorCode::Misaligned, traces.subject_id + ": trace has " + std::to_string(t) +
                                           " frames, label " +
                                           std::to_string(label.samples.size()));
  }
  if (t < input_len) {
    throw Error(ErrorCode::TooShort, traces.subject_id + ": " + std::to_string(t) +
                                         " frames < window " + std::to_string(input_len));
  }
  const std::size_t offset = (input_len - cfg.window_len) / 2;
  const std::size_t count = window_count(t, input_len, cfg.stride);
  std::vector<WindowPair> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * cfg.stride;
    WindowPair& p = out[w];
    p.subject_id = traces.subject_id;
    p.start_frame = start;
    p.label_offset = offset;
    p.input = Matrix(traces.traces.rows(), input_len);
    for (std::size_t r = 0; r < traces.traces.rows(); ++r) {
      const auto norm = normalize_window(traces.traces.row(r).subspan(start, input_len));
      std::copy(norm.begin(), norm.end(), p.input.row(r).begin());
    }
    const std::span<const double> lab(label.samples.data() + start + offset, cfg.window_len);
    p.label = bandpass_window(lab, band, cfg.fps);
    p.label_hr = label_hr_or_floor(p.label, cfg.fps, band);
  }
  return out;
}

}  // namespace

std::vector<WindowPair> make_windows(const RoiTraceMatrix& traces, const PulseLabel& label,
                                     const WindowingConfig& cfg, const BandConfig& band) {
  return windows_impl(traces, label, cfg, band, cfg.window_len);
}

std::vector<WindowPair> make_extended_windows(const RoiTraceMatrix& traces,
                                              const PulseLabel& label,
                                              const WindowingConfig& cfg,
                                              const BandConfig& band, std::size_t input_len) {
  if (input_len < cfg.window_len) {
    throw Error(ErrorCode::BadConfig, "extended input shorter than the label window");
  }
  return windows_impl(traces, label, cfg, band, input_len);
}

std::vector<double> resample_linear(std::span<const double> x, double rate) {
  std::vector<double> out(x.size());
  const std::size_t last = x.size() - 1;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double pos = static_cast<double>(k) * rate;
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i >= last) {
      out[k] = x[last];
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    out[k] = frac == 0.0 ? x[i] : x[i] * (1.0 - frac) + x[i + 1] * frac;
  }
  return out;
}

WindowPair resample_augment(const WindowPair& pair, double rate, double fps,
                            const BandConfig& band) {
  if (!(rate > 0.3 && rate < 1.7)) {
    throw Error(ErrorCode::BadRate, "resampling rate " + std::to_string(rate) +
                                        " outside (0.3, 1.7)");
  }
  if (rate == 1.0) return pair;
  WindowPair out;
  out.subject_id = pair.subject_id;
  out.start_frame = pair.start_frame;
  out.label_offset = static_cast<std::size_t>(
      std::lround(static_cast<double>(pair.label_offset) / rate));
  out.input = Matrix(pair.input.rows(), pair.input.cols());
  for (std::size_t r = 0; r < pair.input.rows(); ++r) {
    const auto norm = normalize_window(resample_linear(pair.input.row(r), rate));
    std::copy(norm.begin(), norm.end(), out.input.row(r).begin());
  }
  out.label = resample_linear(pair.label, rate);
  out.label_hr = label_hr_or_floor(out.label, fps, band);
  return out;
}

std::pair<double, double> draw_augment_rates(const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(cfg.r_low, cfg.r_high);
  const double r = dist(rng);
  return {1.0 + r, 1.0 - r};
}

}  // namespace ippg
