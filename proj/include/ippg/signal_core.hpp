#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ippg/matrix.hpp"
#include "ippg/spectral.hpp"

namespace ippg {

inline constexpr std::size_t kRoiCount = 23;
inline constexpr double kFrameRate = 30.0;

enum class Scenario { garage, driving };
enum class Motion { still, small_motion };

std::string to_string(Scenario s);
std::string to_string(Motion m);
Scenario parse_scenario(const std::string& s);
Motion parse_motion(const std::string& s);

struct RoiTraceMatrix {
  std::string subject_id;
  Scenario scenario = Scenario::garage;
  Motion motion = Motion::still;
  double fps = kFrameRate;
  Matrix traces;  // kRoiCount x T

  std::size_t frames() const { return traces.cols(); }
  // Throws on wrong ROI count, fps != 30, T < min_frames or non-finite values.
  void validate(std::size_t min_frames = 300) const;
};

struct PulseLabel {
  std::vector<double> samples;
  double fps = kFrameRate;
};

struct WindowingConfig {
  std::size_t window_len = 300;
  std::size_t stride = 10;
  double fps = kFrameRate;

  void validate() const;
};

struct WindowPair {
  Matrix input;               // kRoiCount x input length, rows z-scored
  std::vector<double> label;  // band-passed, window_len samples
  double label_hr = 0.0;
  std::string subject_id;
  std::size_t start_frame = 0;
  // Position of label[0] inside the input window (non-zero for extended inputs).
  std::size_t label_offset = 0;
};

struct AugmentConfig {
  double r_low = 0.2;
  double r_high = 0.6;
  bool enabled = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Keeps every second sample of a 60 fps recording.
PulseLabel downsample_label(std::span<const double> raw);

// Delays a label by `frames` samples, repeating the first value at the start.
std::vector<double> delay_signal(std::span<const double> x, std::size_t frames);

std::size_t window_count(std::size_t frames, std::size_t window_len, std::size_t stride);

// z-score with population std and a 1e-8 floor.
std::vector<double> normalize_window(std::span<const double> row);

// Sliding windows of cfg.window_len over traces and label.
std::vector<WindowPair> make_windows(const RoiTraceMatrix& traces, const PulseLabel& label,
                                     const WindowingConfig& cfg, const BandConfig& band);

// Inputs of `input_len` frames with a cfg.window_len label window centred inside.
std::vector<WindowPair> make_extended_windows(const RoiTraceMatrix& traces,
                                              const PulseLabel& label,
                                              const WindowingConfig& cfg,
                                              const BandConfig& band, std::size_t input_len);

// Linear interpolation of x at positions k*rate, clamped to the last sample.
std::vector<double> resample_linear(std::span<const double> x, double rate);

// Stretches/compresses both input rows and label so apparent frequencies
// scale by `rate`. Accepts rate in (0.3, 1.7).
WindowPair resample_augment(const WindowPair& pair, double rate, double fps,
                            const BandConfig& band);

// Draws r ~ U[r_low, r_high] and returns (1+r, 1-r).
std::pair<double, double> draw_augment_rates(const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace ippg
