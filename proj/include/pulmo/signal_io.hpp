#ifndef PULMO_SIGNAL_IO_HPP
#define PULMO_SIGNAL_IO_HPP

#include "pulmo/types.hpp"

#include <filesystem>

namespace pulmo {

/// Mono time-domain signal. Samples are nominally in [-1, 1].
struct Waveform {
  vec samples;
  int sample_rate = 8000;

  Eigen::Index size() const { return samples.size(); }
  double duration() const { return double(samples.size()) / sample_rate; }
};

/// Throws InvalidArgument unless the rate is positive and every sample finite.
void validate(const Waveform& w);

/// Reads a PCM WAV (8/16/24/32-bit integer or 32-bit float), averages
/// channels, resamples to `target_rate` and divides by the peak when it
/// exceeds 1.
Waveform load_audio(const std::filesystem::path& path, int target_rate = 8000);

/// Writes 16-bit little-endian PCM. Samples are clipped to [-1, 1) first.
void save_audio(const Waveform& waveform, const std::filesystem::path& path);

/// Windowed-sinc (Kaiser) resampler with 32 taps per output phase.
/// Output length is round(len * target / source).
vec resample(const Eigen::Ref<const vec>& x, int source_rate, int target_rate);

}  // namespace pulmo

#endif
