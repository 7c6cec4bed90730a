#ifndef PULMO_SYNTHETIC_HPP
#define PULMO_SYNTHETIC_HPP

#include "pulmo/signal_io.hpp"

#include <cstdint>
#include <string>

namespace pulmo {

enum class SourceKind { impulse_train_tone, am_noise };

/// Quasi-periodic surrogate source.
///   impulse_train_tone: bursts at `rate_hz`, each an exponentially decaying
///     sinusoid at `carrier_hz` with time constant `decay_s`.
///   am_noise: white noise band-limited to [band_lo_hz, band_hi_hz] and
///     modulated by (1 + sin(2 pi rate t)) / 2.
struct SourceSpec {
  SourceKind kind = SourceKind::impulse_train_tone;
  double rate_hz = 1.2;
  double carrier_hz = 90.0;
  double decay_s = 0.04;
  double band_lo_hz = 150.0;
  double band_hi_hz = 900.0;
  double duration_s = 30.0;
  int sample_rate = 8000;
  std::uint64_t seed = 17;

  static SourceSpec heart(double duration_s = 30.0, std::uint64_t seed = 17);
  static SourceSpec lung(double duration_s = 30.0, std::uint64_t seed = 17);
};

inline constexpr double kMinDurationSeconds = 3.0;
inline constexpr double kSurrogatePeak = 0.8;

void validate(const SourceSpec& spec);

/// Peak-normalised to 0.8. Deterministic given the spec (including seed).
Waveform generate(const SourceSpec& spec);

std::string to_string(SourceKind kind);

}  // namespace pulmo

#endif
