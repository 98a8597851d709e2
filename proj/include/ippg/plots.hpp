#pragma once

#include <filesystem>
#include <string>

#include "ippg/evaluator.hpp"
#include "ippg/spectral.hpp"

namespace ippg {

// `note`, when non-empty, goes into a comment line at the top of the file.

// Line chart of estimated vs. reference HR over time.
void write_hr_track_svg(const std::filesystem::path& path, const HrTrack& track,
                        const std::string& note = {});

// Spectrogram heat map (time on x, bpm on y, low bpm at the bottom) as binary PPM.
void write_spectrogram_ppm(const std::filesystem::path& path, const Spectrogram& sg,
                           const std::string& note = {});

// First column time_s, then one column per in-band bin labelled by its bpm.
void write_spectrogram_csv(const std::filesystem::path& path, const Spectrogram& sg,
                           const std::string& note = {});

}  // namespace ippg
