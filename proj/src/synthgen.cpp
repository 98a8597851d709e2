#include "ippg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ippg/error.hpp"

namespace ippg {

void SynthSpec::validate() const {
  if (n_subjects == 0 || !(duration > 0.0)) {
    throw Error(ErrorCode::BadConfig, "synthetic dataset needs subjects and a positive duration");
  }
  if (fps != kFrameRate) throw Error(ErrorCode::BadConfig, "synthetic video rate must be 30 fps");
  if (label_fps != fps && label_fps != 2.0 * fps) {
    throw Error(ErrorCode::BadConfig, "label_fps must be 30 or 60");
  }
  if (!(hr_low >= 45.0 && hr_low <= hr_high && hr_high <= 180.0)) {
    throw Error(ErrorCode::BadConfig, "HR range must lie within [45, 180] bpm");
  }
  if (!(gain_low > 0.0 && gain_low <= gain_high)) {
    throw Error(ErrorCode::BadConfig, "ROI gains must be positive");
  }
  if (hr_drift < 0.0 || noise_std < 0.0 || baseline_drift_std < 0.0 || label_noise_std < 0.0) {
    throw Error(ErrorCode::BadConfig, "noise parameters must be non-negative");
  }
}

std::size_t SynthSpec::frames() const {
  return static_cast<std::size_t>(std::llround(duration * fps));
}

std::string synth_subject_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02zu", index + 1);
  return buf;
}

SynthSubject generate_subject(const SynthSpec& spec, std::size_t subject_index) {
  spec.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(subject_index), std::uint32_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n_frames = spec.frames();
  const auto ratio = static_cast<std::size_t>(spec.label_fps / spec.fps);
  const std::size_t n_fine = n_frames * ratio;
  const double dt = 1.0 / spec.label_fps;

  SynthSubject s;
  for (double& g : s.gains) g = spec.gain_low + (spec.gain_high - spec.gain_low) * unit(rng);

  // Pulse and HR on the label clock.
  std::vector<double> pulse(n_fine), hr_fine(n_fine);
  double hr = spec.hr_low + (spec.hr_high - spec.hr_low) * unit(rng);
  double phase = unit(rng);
  const double step_sd = spec.hr_drift * std::sqrt(dt);
  for (std::size_t m = 0; m < n_fine; ++m) {
    hr_fine[m] = hr;
    pulse[m] = std::sin(two_pi * phase) + spec.harmonic_amp * std::sin(2.0 * two_pi * phase);
    phase += hr / 60.0 * dt;
    hr = std::clamp(hr + step_sd * gauss(rng), 45.0, 180.0);
  }

  // Slow baseline: a few sub-0.2 Hz components per ROI.
  struct Wander {
    double amp, freq, phase;
  };
  s.traces.subject_id = synth_subject_id(subject_index);
  s.traces.scenario = spec.scenario;
  s.traces.motion = spec.motion;
  s.traces.fps = spec.fps;
  s.traces.traces = Matrix(kRoiCount, n_frames);
  for (std::size_t r = 0; r < kRoiCount; ++r) {
    std::array<Wander, 3> wander{};
    for (auto& w : wander) {
      w = {spec.baseline_drift_std * s.gains[r] * unit(rng), 0.02 + 0.18 * unit(rng),
           two_pi * unit(rng)};
    }
    const double offset = 100.0 * s.gains[r];
    auto row = s.traces.traces.row(r);
    for (std::size_t k = 0; k < n_frames; ++k) {
      const double t = static_cast<double>(k) / spec.fps;
      double base = offset;
      for (const auto& w : wander) base += w.amp * std::sin(two_pi * w.freq * t + w.phase);
      row[k] = base + s.gains[r] * (pulse[k * ratio] + spec.noise_std * gauss(rng));
    }
  }

  const std::size_t delay = spec.label_delay_frames * ratio;
  s.raw_label.resize(n_fine);
  for (std::size_t m = 0; m < n_fine; ++m) {
    const std::size_t src = m >= delay ? m - delay : 0;
    s.raw_label[m] = pulse[src] + spec.label_noise_std * gauss(rng);
  }
  if (ratio == 2) {
    s.label = downsample_label(s.raw_label);
  } else {
    s.label.samples = s.raw_label;
  }

  s.hr.resize(n_frames);
  for (std::size_t k = 0; k < n_frames; ++k) s.hr[k] = hr_fine[k * ratio];
  return s;
}

std::vector<double> true_window_hr(const SynthSubject& s, const WindowingConfig& cfg) {
  const std::size_t n = window_count(s.hr.size(), cfg.window_len, cfg.stride);
  std::vector<double> out(n);
  for (std::size_t w = 0; w < n; ++w) {
    const auto begin = s.hr.begin() + static_cast<std::ptrdiff_t>(w * cfg.stride);
    double sum = 0.0;
    for (auto it = begin; it != begin + static_cast<std::ptrdiff_t>(cfg.window_len); ++it) sum += *it;
    out[w] = sum / static_cast<double>(cfg.window_len);
  }
  return out;
}

std::vector<std::filesystem::path> generate_dataset(const SynthSpec& spec,
                                                    const std::filesystem::path& root) {
  spec.validate();
  std::vector<std::filesystem::path> manifests;
  for (std::size_t i = 0; i < spec.n_subjects; ++i) {
    const SynthSubject s = generate_subject(spec, i);
    SessionManifest m;
    m.subject_id = s.traces.subject_id;
    m.scenario = spec.scenario;
    m.motion = spec.motion;
    m.fps = spec.fps;
    m.label_fps = spec.label_fps;
    const auto dir = root / (m.subject_id + "_" + to_string(m.scenario) + "_" + to_string(m.motion));
    write_session(dir, m, s.traces.traces, s.raw_label);
    manifests.push_back(dir / kManifestName);
  }
  return manifests;
}

}  // namespace ippg
