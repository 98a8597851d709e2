#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ippg/matrix.hpp"

namespace ippg {

// Heart-rate pass band in beats per minute.
struct BandConfig {
  double low = 45.0;
  double high = 180.0;

  // Throws BadConfig unless 0 < low < high < fps*60/2.
  void validate(double fps) const;
};

struct Spectrum {
  std::vector<double> freqs;  // bpm, strictly increasing
  std::vector<double> mags;
  double bin_width = 0.0;     // bpm
};

struct Spectrogram {
  std::vector<double> times;  // seconds
  std::vector<double> freqs;  // bpm, in-band bins only
  Matrix spectra;             // windows x bins
};

// DFT bin spacing in bpm for a window of `len` samples.
double bin_width_bpm(std::size_t len, double fps, std::size_t zero_pad = 1);

// Magnitudes of the in-band DFT bins. `zero_pad` > 1 appends zeros before the
// transform to refine the grid.
Spectrum band_spectrum(std::span<const double> w, double fps, const BandConfig& band,
                       std::size_t zero_pad = 1);

// Frequency (bpm) of the largest in-band DFT magnitude. Equal magnitudes
// resolve to the lowest frequency. Throws NoSignal when the band is empty.
double estimate_hr(std::span<const double> w, double fps, const BandConfig& band,
                   std::size_t zero_pad = 1);

// One in-band magnitude row per window; times[k] = k * stride / fps.
Spectrogram spectrogram(std::span<const std::vector<double>> windows, double fps,
                        const BandConfig& band, std::size_t stride_frames);

// Zero every DFT bin outside [low, high] bpm (DC always), inverse, real part.
std::vector<double> bandpass_window(std::span<const double> w, const BandConfig& band,
                                    double fps);

}  // namespace ippg
