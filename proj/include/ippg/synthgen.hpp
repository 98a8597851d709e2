#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ippg/dataset_io.hpp"
#include "ippg/signal_core.hpp"

namespace ippg {

// Synthetic NIR-style sessions with a known heart-rate trajectory.
//
// Pulse: p(t) = sin(2*pi*phi) + harmonic_amp * sin(4*pi*phi), dphi/dt = hr(t)/60.
// hr(t) starts at U[hr_low, hr_high] and follows a clipped random walk.
// ROI i: offset + gain_i * p(t) + noise + slow baseline wander.
struct SynthSpec {
  std::size_t n_subjects = 6;
  double duration = 120.0;  // seconds
  double fps = kFrameRate;
  double label_fps = 60.0;
  double hr_low = 45.0;
  double hr_high = 110.0;
  double hr_drift = 0.2;  // random-walk std, bpm per sqrt(second)
  double harmonic_amp = 0.3;
  double gain_low = 0.5;
  double gain_high = 1.5;
  double noise_std = 0.05;           // relative to the ROI's pulse amplitude
  double baseline_drift_std = 0.5;   // slow wander amplitude, same units
  double label_noise_std = 0.01;
  std::size_t label_delay_frames = 0;  // label lags the video by this many frames
  Scenario scenario = Scenario::garage;
  Motion motion = Motion::still;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t frames() const;
};

struct SynthSubject {
  RoiTraceMatrix traces;
  std::vector<double> raw_label;  // at label_fps
  PulseLabel label;               // at video rate
  std::vector<double> hr;         // bpm per video frame
  std::array<double, kRoiCount> gains{};
};

std::string synth_subject_id(std::size_t index);

SynthSubject generate_subject(const SynthSpec& spec, std::size_t subject_index);

// Window-averaged ground-truth HR, one value per window.
std::vector<double> true_window_hr(const SynthSubject& s, const WindowingConfig& cfg);

// Writes one session directory per subject under root; returns manifest paths.
std::vector<std::filesystem::path> generate_dataset(const SynthSpec& spec,
                                                    const std::filesystem::path& root);

}  // namespace ippg
