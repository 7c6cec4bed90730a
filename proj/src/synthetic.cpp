#include "pulmo/synthetic.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <random>

namespace pulmo {

SourceSpec SourceSpec::heart(double duration_s, std::uint64_t seed) {
  SourceSpec s;
  s.kind = SourceKind::impulse_train_tone;
  s.rate_hz = 1.2;
  s.carrier_hz = 90.0;
  s.decay_s = 0.04;
  s.duration_s = duration_s;
  s.seed = seed;
  return s;
}

SourceSpec SourceSpec::lung(double duration_s, std::uint64_t seed) {
  SourceSpec s;
  s.kind = SourceKind::am_noise;
  s.rate_hz = 0.25;
  s.band_lo_hz = 150.0;
  s.band_hi_hz = 900.0;
  s.duration_s = duration_s;
  s.seed = seed;
  return s;
}

std::string to_string(SourceKind kind) {
  return kind == SourceKind::impulse_train_tone ? "impulse_train_tone" : "am_noise";
}

void validate(const SourceSpec& s) {
  if (!(s.rate_hz > 0.0)) throw InvalidArgument("source rate must be positive");
  if (!(s.duration_s >= kMinDurationSeconds))
    throw InvalidArgument("source duration must be at least 3 s (got " + std::to_string(s.duration_s) + ")");
  if (s.sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  const double nyquist = s.sample_rate / 2.0;
  if (s.kind == SourceKind::impulse_train_tone) {
    if (!(s.carrier_hz > 0.0 && s.carrier_hz < nyquist)) throw InvalidArgument("invalid carrier frequency");
    if (!(s.decay_s > 0.0)) throw InvalidArgument("decay must be positive");
  } else {
    if (!(s.band_lo_hz > 0.0 && s.band_lo_hz < s.band_hi_hz && s.band_hi_hz < nyquist))
      throw InvalidArgument("invalid band [" + std::to_string(s.band_lo_hz) + ", " + std::to_string(s.band_hi_hz) +
                            "] Hz");
  }
}

Waveform generate(const SourceSpec& s) {
  validate(s);
  const auto n = Eigen::Index(std::llround(s.duration_s * s.sample_rate));
  const double fs = s.sample_rate;
  std::mt19937_64 rng(s.seed);
  vec x = vec::Zero(n);

  if (s.kind == SourceKind::impulse_train_tone) {
    const double period = 1.0 / s.rate_hz;
    std::uniform_real_distribution<double> phase(0.1, 0.9);
    const double offset = phase(rng) * period;
    const auto burst_len = Eigen::Index(std::ceil(8.0 * s.decay_s * fs));
    for (double t0 = offset; t0 < s.duration_s; t0 += period) {
      const auto start = Eigen::Index(std::llround(t0 * fs));
      for (Eigen::Index k = 0; k < burst_len && start + k < n; ++k) {
        const double tau = double(k) / fs;
        x[start + k] += std::exp(-tau / s.decay_s) * std::sin(2.0 * std::numbers::pi * s.carrier_hz * tau);
      }
    }
  } else {
    std::normal_distribution<double> gauss(0.0, 1.0);
    vec white(n);
    for (Eigen::Index i = 0; i < n; ++i) white[i] = gauss(rng);
    Eigen::FFT<real> fft;
    cvec spec;
    fft.fwd(spec, white);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double f = double(std::min(k, n - k)) * fs / double(n);
      if (f < s.band_lo_hz || f > s.band_hi_hz) spec[k] = 0.0;
    }
    vec band;
    fft.inv(band, spec);
    for (Eigen::Index i = 0; i < n; ++i)
      x[i] = band[i] * 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * s.rate_hz * double(i) / fs));
  }

  const double peak = x.cwiseAbs().maxCoeff();
  if (peak > 0.0) x *= kSurrogatePeak / peak;
  return Waveform{std::move(x), s.sample_rate};
}

}  // namespace pulmo
