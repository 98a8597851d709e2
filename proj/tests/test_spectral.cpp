#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ippg/error.hpp"
#include "ippg/spectral.hpp"
#include "oracles.hpp"

using namespace ippg;

TEST_SUITE("spectral") {

TEST_CASE("bin width of a 300-sample window at 30 fps is 6 bpm") {
  CHECK(bin_width_bpm(300, 30.0) == doctest::Approx(6.0));
  CHECK(bin_width_bpm(300, 30.0, 4) == doctest::Approx(1.5));
  const auto s = band_spectrum(oracle::sinusoid(72, 300), 30.0, {});
  CHECK(s.bin_width == doctest::Approx(6.0));
  CHECK(s.freqs.size() == s.mags.size());
  for (std::size_t i = 1; i < s.freqs.size(); ++i) CHECK(s.freqs[i] > s.freqs[i - 1]);
  CHECK(s.freqs.front() == doctest::Approx(48.0));
  CHECK(s.freqs.back() == doctest::Approx(180.0));
}

TEST_CASE("in-band magnitudes agree with a direct DFT") {
  std::mt19937_64 rng(3);
  const auto x = oracle::random_vector(300, rng);
  const auto s = band_spectrum(x, 30.0, {});
  for (std::size_t i = 0; i < s.freqs.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::lround(s.freqs[i] / 6.0));
    CHECK(s.mags[i] == doctest::Approx(oracle::dft_mag(x, k)).epsilon(1e-10));
  }
}

TEST_CASE("72 bpm unit sinusoid is on-bin") {
  CHECK(estimate_hr(oracle::sinusoid(72, 300), 30.0, {}) == 72.0);
}

TEST_CASE("75 bpm sinusoid falls between bins and resolves to 72") {
  const auto x = oracle::sinusoid(75, 300);
  // The direct DFT decides which neighbour is larger; the estimator must agree.
  const double m72 = oracle::dft_mag(x, 12), m78 = oracle::dft_mag(x, 13);
  CHECK(m72 >= m78);
  CHECK(oracle::dft_peak_bpm(x, 30.0) == 72.0);
  CHECK(estimate_hr(x, 30.0, {}) == 72.0);
}

TEST_CASE("ties resolve to the lowest frequency") {
  // Equal-amplitude cosines on bins 10 and 20: magnitudes are identical.
  std::vector<double> x(300);
  for (std::size_t k = 0; k < 300; ++k) {
    const double t = static_cast<double>(k);
    x[k] = std::cos(2 * std::numbers::pi * 10 * t / 300) + std::cos(2 * std::numbers::pi * 20 * t / 300);
  }
  CHECK(estimate_hr(x, 30.0, {}) == 60.0);
}

TEST_CASE("dominant component wins") {
  auto x = oracle::sinusoid(60, 300);
  const auto y = oracle::sinusoid(120, 300, 30.0, 0.5);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  CHECK(estimate_hr(x, 30.0, {}) == 60.0);
}

TEST_CASE("every on-bin frequency is recovered exactly") {
  for (int f = 48; f <= 180; f += 6) {
    CAPTURE(f);
    for (double phase : {0.0, 0.7, 2.1}) {
      CHECK(estimate_hr(oracle::sinusoid(f, 300, 30.0, 1.0, phase), 30.0, {}) == f);
    }
  }
}

TEST_CASE("estimate is invariant to positive scaling and sign flip") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = oracle::random_vector(300, rng);
    const double hr = estimate_hr(x, 30.0, {});
    CHECK(hr == oracle::dft_peak_bpm(x, 30.0));
    std::vector<double> y(x.size()), z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      y[i] = 3.7 * x[i];
      z[i] = -x[i];
    }
    CHECK(estimate_hr(y, 30.0, {}) == hr);
    CHECK(estimate_hr(z, 30.0, {}) == hr);
  }
}

TEST_CASE("zero-padding refines the grid") {
  const double hr = estimate_hr(oracle::sinusoid(75, 300), 30.0, {}, 4);
  CHECK(hr == doctest::Approx(75.0).epsilon(0.02));
}

TEST_CASE("silent band raises NoSignal") {
  std::vector<double> zeros(300, 0.0);
  try {
    estimate_hr(zeros, 30.0, {});
    FAIL("expected NoSignal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoSignal);
  }
}

TEST_CASE("band validation") {
  CHECK_NOTHROW(BandConfig{}.validate(30.0));
  CHECK_THROWS_AS((BandConfig{180, 45}.validate(30.0)), Error);
  CHECK_THROWS_AS((BandConfig{0, 180}.validate(30.0)), Error);
  CHECK_THROWS_AS((BandConfig{45, 900}.validate(30.0)), Error);
}

TEST_CASE("spectrogram rows match per-window estimates") {
  SUBCASE("identical windows give identical rows") {
    std::vector<std::vector<double>> ws(5, oracle::sinusoid(84, 300));
    const auto sg = spectrogram(ws, 30.0, {}, 10);
    REQUIRE(sg.spectra.rows() == 5);
    for (std::size_t k = 1; k < 5; ++k) {
      CHECK(std::equal(sg.spectra.row(k).begin(), sg.spectra.row(k).end(), sg.spectra.row(0).begin()));
    }
    for (std::size_t k = 0; k < 5; ++k) CHECK(sg.times[k] == doctest::Approx(k * 10 / 30.0));
  }
  SUBCASE("chirp gives a non-decreasing argmax") {
    // Instantaneous rate sweeps 60 -> 90 bpm over the recording.
    const std::size_t total = 300 + 10 * 60;
    std::vector<double> sig(total);
    double phase = 0.0;
    for (std::size_t t = 0; t < total; ++t) {
      const double bpm = 60.0 + 30.0 * static_cast<double>(t) / static_cast<double>(total - 1);
      phase += 2 * std::numbers::pi * bpm / 60.0 / 30.0;
      sig[t] = std::sin(phase);
    }
    std::vector<std::vector<double>> ws;
    for (std::size_t s = 0; s + 300 <= total; s += 10) ws.emplace_back(sig.begin() + s, sig.begin() + s + 300);
    const auto sg = spectrogram(ws, 30.0, {}, 10);
    double prev = 0.0;
    for (std::size_t k = 0; k < ws.size(); ++k) {
      const auto row = sg.spectra.row(k);
      const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      CHECK(sg.freqs[arg] >= prev);
      CHECK(sg.freqs[arg] == estimate_hr(ws[k], 30.0, {}));
      prev = sg.freqs[arg];
    }
    CHECK(prev > 80.0);
  }
  SUBCASE("single window") {
    std::vector<std::vector<double>> ws{oracle::sinusoid(102, 300)};
    const auto sg = spectrogram(ws, 30.0, {}, 10);
    REQUIRE(sg.spectra.rows() == 1);
    const auto row = sg.spectra.row(0);
    CHECK(sg.freqs[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())] == 102.0);
  }
  SUBCASE("ragged input") {
    std::vector<std::vector<double>> ws{oracle::sinusoid(60, 300), oracle::sinusoid(60, 299)};
    try {
      spectrogram(ws, 30.0, {}, 10);
      FAIL("expected RaggedInput");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::RaggedInput);
    }
  }
}

TEST_CASE("band-pass removes DC and stopband content") {
  SUBCASE("DC removal keeps the in-band tone") {
    auto x = oracle::sinusoid(72, 300);
    for (double& v : x) v += 5.0;
    const auto y = bandpass_window(x, {}, 30.0);
    CHECK(std::abs(oracle::mean(y)) < 1e-9);
    const auto ref = oracle::sinusoid(72, 300);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-9).scale(1.0));
  }
  SUBCASE("out-of-band tone is annihilated") {
    CHECK(oracle::rms(bandpass_window(oracle::sinusoid(30, 300), {}, 30.0)) < 1e-9);
  }
  SUBCASE("two-tone mix keeps only the in-band part") {
    auto x = oracle::sinusoid(30, 300);
    const auto keep = oracle::sinusoid(90, 300);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += keep[i];
    const auto y = bandpass_window(x, {}, 30.0);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - keep[i]) < 1e-6);
  }
  SUBCASE("matches a direct-DFT mask on random data, odd and even lengths") {
    std::mt19937_64 rng(5);
    for (std::size_t n : {300u, 301u, 64u}) {
      const auto x = oracle::random_vector(n, rng);
      const auto y = bandpass_window(x, {}, 30.0);
      const auto ref = oracle::dft_bandpass(x, 30.0, 45.0, 180.0);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-9);
    }
  }
  SUBCASE("idempotent and linear") {
    std::mt19937_64 rng(6);
    const auto a = oracle::random_vector(300, rng);
    const auto b = oracle::random_vector(300, rng);
    const auto fa = bandpass_window(a, {}, 30.0);
    const auto ffa = bandpass_window(fa, {}, 30.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(ffa[i] - fa[i]) < 1e-9);
    std::vector<double> mix(300);
    for (std::size_t i = 0; i < 300; ++i) mix[i] = 2.0 * a[i] - 0.5 * b[i];
    const auto fm = bandpass_window(mix, {}, 30.0);
    const auto fb = bandpass_window(b, {}, 30.0);
    for (std::size_t i = 0; i < 300; ++i) CHECK(std::abs(fm[i] - (2.0 * fa[i] - 0.5 * fb[i])) < 1e-9);
  }
}

}  // TEST_SUITE
