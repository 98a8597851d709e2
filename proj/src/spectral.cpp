#include "ippg/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <string>

#include "ippg/error.hpp"

namespace ippg {

namespace {

struct RealPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// FFTW planning is not thread-safe; execution with new arrays is.
const RealPlans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, RealPlans> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  std::vector<double> re(n);
  std::vector<fftw_complex> spec(n / 2 + 1);
  const int len = static_cast<int>(n);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  RealPlans p;
  p.forward = fftw_plan_dft_r2c_1d(len, re.data(), spec.data(), flags);
  p.inverse = fftw_plan_dft_c2r_1d(len, spec.data(), re.data(), flags);
  return cache.emplace(n, p).first->second;
}

std::vector<std::complex<double>> real_dft(std::span<const double> w, std::size_t n) {
  std::vector<double> in(n, 0.0);
  std::copy(w.begin(), w.end(), in.begin());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_execute_dft_r2c(plans_for(n).forward, in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

bool in_band(double bpm, const BandConfig& band) { return bpm >= band.low && bpm <= band.high; }

}  // namespace

void BandConfig::validate(double fps) const {
  if (!(low > 0.0 && low < high && high < fps * 60.0 / 2.0)) {
    throw Error(ErrorCode::BadConfig, "band must satisfy 0 < low < high < Nyquist (bpm)");
  }
}

double bin_width_bpm(std::size_t len, double fps, std::size_t zero_pad) {
  return fps * 60.0 / static_cast<double>(len * zero_pad);
}

Spectrum band_spectrum(std::span<const double> w, double fps, const BandConfig& band,
                       std::size_t zero_pad) {
  if (w.size() < 2) throw Error(ErrorCode::TooShort, "spectrum needs at least 2 samples");
  if (zero_pad == 0) zero_pad = 1;
  const std::size_t n = w.size() * zero_pad;
  const auto dft = real_dft(w, n);
  Spectrum s;
  s.bin_width = bin_width_bpm(w.size(), fps, zero_pad);
  for (std::size_t k = 1; k < dft.size(); ++k) {
    const double bpm = static_cast<double>(k) * s.bin_width;
    if (!in_band(bpm, band)) continue;
    s.freqs.push_back(bpm);
    s.mags.push_back(std::abs(dft[k]));
  }
  return s;
}

double estimate_hr(std::span<const double> w, double fps, const BandConfig& band,
                   std::size_t zero_pad) {
  const Spectrum s = band_spectrum(w, fps, band, zero_pad);
  std::size_t best = s.mags.size();
  double best_mag = 0.0;
  for (std::size_t i = 0; i < s.mags.size(); ++i) {
    if (s.mags[i] > best_mag) {
      best_mag = s.mags[i];
      best = i;
    }
  }
  if (best == s.mags.size()) throw Error(ErrorCode::NoSignal, "no in-band energy");
  return s.freqs[best];
}

Spectrogram spectrogram(std::span<const std::vector<double>> windows, double fps,
                        const BandConfig& band, std::size_t stride_frames) {
  if (windows.empty()) throw Error(ErrorCode::RaggedInput, "no windows");
  const std::size_t len = windows.front().size();
  for (const auto& w : windows) {
    if (w.size() != len) throw Error(ErrorCode::RaggedInput, "windows differ in length");
  }
  Spectrogram sg;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    Spectrum s = band_spectrum(windows[k], fps, band);
    if (k == 0) {
      sg.freqs = s.freqs;
      sg.spectra = Matrix(windows.size(), s.mags.size());
    }
    std::copy(s.mags.begin(), s.mags.end(), sg.spectra.row(k).begin());
    sg.times.push_back(static_cast<double>(k * stride_frames) / fps);
  }
  return sg;
}

std::vector<double> bandpass_window(std::span<const double> w, const BandConfig& band,
                                    double fps) {
  if (w.size() < 2) throw Error(ErrorCode::TooShort, "band-pass needs at least 2 samples");
  const std::size_t n = w.size();
  auto spec = real_dft(w, n);
  const double width = bin_width_bpm(n, fps);
  spec[0] = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    if (!in_band(static_cast<double>(k) * width, band)) spec[k] = 0.0;
  }
  std::vector<double> out(n);
  fftw_execute_dft_c2r(plans_for(n).inverse, reinterpret_cast<fftw_complex*>(spec.data()),
                       out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
  return out;
}

}  // namespace ippg
