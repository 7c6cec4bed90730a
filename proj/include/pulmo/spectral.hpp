#ifndef PULMO_SPECTRAL_HPP
#define PULMO_SPECTRAL_HPP

#include "pulmo/signal_io.hpp"
#include "pulmo/types.hpp"

namespace pulmo {

enum class Window { hann };

/// One-sided STFT, frames stored as rows (N x B, B = frame_len/2 + 1).
struct ComplexSpectrogram {
  cmat frames;
  int frame_len = 2048;
  int hop = 128;
  Window window = Window::hann;
  int sample_rate = 8000;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index num_bins() const { return frames.cols(); }
  double frame_rate() const { return double(sample_rate) / hop; }
};

/// Band-limited log-power features of a spectrogram. `lps` holds the
/// min-max normalised natural-log power of bins [0, F); phase and the
/// discarded high band are kept for resynthesis.
struct LpsBand {
  mat lps;        // N x F, values in [0, 1]
  mat phase;      // N x F
  cmat high_band; // N x (B - F)
  double norm_lo = 0.0;
  double norm_hi = 1.0;
  int frame_len = 2048;
  int hop = 128;
  int sample_rate = 8000;

  Eigen::Index num_frames() const { return lps.rows(); }
  Eigen::Index band_bins() const { return lps.cols(); }
  double frame_rate() const { return double(sample_rate) / hop; }
};

enum class HighBandPolicy { zero, mixture };

inline constexpr int kDefaultFrameLen = 2048;
inline constexpr int kDefaultHop = 128;
inline constexpr int kDefaultBandHi = 300;
inline constexpr double kLogFloor = 1e-12;

/// Periodic Hann window of length n.
vec hann_window(int n);

ComplexSpectrogram stft(const Waveform& waveform, int frame_len = kDefaultFrameLen,
                        int hop = kDefaultHop);

/// Weighted overlap-add with the Hann synthesis window, normalised by the
/// per-sample sum of squared windows. Length is (N - 1) * hop + frame_len.
Waveform istft(const ComplexSpectrogram& spec);

LpsBand to_lps(const ComplexSpectrogram& spec, int band_hi = kDefaultBandHi);

/// Undoes the min-max normalisation: returns natural-log power.
mat denormalize_lps(const LpsBand& band, const Eigen::Ref<const mat>& normalized);

/// exp(lps / 2) of normalised features, i.e. band magnitudes.
mat lps_to_magnitude(const LpsBand& band, const Eigen::Ref<const mat>& normalized);

/// Magnitude of the stored band (|X| for bins [0, F)).
mat band_magnitude(const LpsBand& band);

ComplexSpectrogram from_masked(const LpsBand& band, const Eigen::Ref<const mat>& masked_magnitude,
                               HighBandPolicy policy = HighBandPolicy::zero);

}  // namespace pulmo

#endif
