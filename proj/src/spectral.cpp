#include "pulmo/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>

namespace pulmo {

vec hann_window(int n) {
  vec w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

ComplexSpectrogram stft(const Waveform& waveform, int frame_len, int hop) {
  validate(waveform);
  if (frame_len < 2 || frame_len % 2 != 0) throw InvalidArgument("stft: frame_len must be even and >= 2");
  if (hop < 1 || hop > frame_len) throw InvalidArgument("stft: hop must be in [1, frame_len]");
  const Eigen::Index len = waveform.samples.size();
  if (len < frame_len)
    throw InvalidArgument("stft: signal shorter than one frame (" + std::to_string(len) + " < " +
                          std::to_string(frame_len) + " samples)");

  const Eigen::Index n_frames = (len - frame_len) / hop + 1;
  const Eigen::Index bins = frame_len / 2 + 1;
  const vec window = hann_window(frame_len);

  ComplexSpectrogram spec;
  spec.frame_len = frame_len;
  spec.hop = hop;
  spec.sample_rate = waveform.sample_rate;
  spec.frames.resize(n_frames, bins);

  Eigen::FFT<real> fft;
  fft.SetFlag(Eigen::FFT<real>::HalfSpectrum);
  vec frame(frame_len);
  cvec out;
  for (Eigen::Index n = 0; n < n_frames; ++n) {
    frame = waveform.samples.segment(n * hop, frame_len).cwiseProduct(window);
    fft.fwd(out, frame);
    spec.frames.row(n) = out.head(bins).transpose();
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec) {
  const Eigen::Index bins = spec.frame_len / 2 + 1;
  if (spec.frames.cols() != bins || spec.frames.rows() < 1)
    throw InvalidArgument("istft: spectrogram shape does not match frame_len");
  if (!spec.frames.allFinite()) throw InvalidArgument("istft: non-finite spectrogram");

  const Eigen::Index n_frames = spec.frames.rows();
  const Eigen::Index len = (n_frames - 1) * spec.hop + spec.frame_len;
  const vec window = hann_window(spec.frame_len);
  vec acc = vec::Zero(len);
  vec norm = vec::Zero(len);

  Eigen::FFT<real> fft;
  fft.SetFlag(Eigen::FFT<real>::HalfSpectrum);
  cvec half(bins);
  vec frame;
  for (Eigen::Index n = 0; n < n_frames; ++n) {
    half = spec.frames.row(n).transpose();
    fft.inv(frame, half, spec.frame_len);
    acc.segment(n * spec.hop, spec.frame_len) += frame.cwiseProduct(window);
    norm.segment(n * spec.hop, spec.frame_len) += window.cwiseAbs2();
  }
  // Samples with (almost) no window support cannot be recovered.
  const double floor = 1e-8 * norm.maxCoeff();
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples = vec::Zero(len);
  for (Eigen::Index i = 0; i < len; ++i)
    if (norm[i] > floor) w.samples[i] = acc[i] / norm[i];
  return w;
}

LpsBand to_lps(const ComplexSpectrogram& spec, int band_hi) {
  const Eigen::Index bins = spec.frames.cols();
  const Eigen::Index band = band_hi + 1;
  if (band_hi < 0 || band > bins)
    throw InvalidArgument("to_lps: band_hi " + std::to_string(band_hi) + " exceeds spectrogram bins");

  LpsBand out;
  out.frame_len = spec.frame_len;
  out.hop = spec.hop;
  out.sample_rate = spec.sample_rate;
  const auto lows = spec.frames.leftCols(band);
  out.lps = (lows.cwiseAbs2().array() + kLogFloor).log().matrix();
  out.phase = lows.unaryExpr([](const cplx& c) { return std::arg(c); });
  out.high_band = spec.frames.rightCols(bins - band);

  out.norm_lo = out.lps.minCoeff();
  out.norm_hi = out.lps.maxCoeff();
  if (!(out.norm_hi > out.norm_lo)) out.norm_hi = out.norm_lo + 1.0;
  out.lps = ((out.lps.array() - out.norm_lo) / (out.norm_hi - out.norm_lo)).matrix();
  return out;
}

mat denormalize_lps(const LpsBand& band, const Eigen::Ref<const mat>& normalized) {
  return (normalized.array() * (band.norm_hi - band.norm_lo) + band.norm_lo).matrix();
}

mat lps_to_magnitude(const LpsBand& band, const Eigen::Ref<const mat>& normalized) {
  return (denormalize_lps(band, normalized).array() * 0.5).exp().matrix();
}

mat band_magnitude(const LpsBand& band) { return lps_to_magnitude(band, band.lps); }

ComplexSpectrogram from_masked(const LpsBand& band, const Eigen::Ref<const mat>& masked_magnitude,
                               HighBandPolicy policy) {
  if (masked_magnitude.rows() != band.lps.rows() || masked_magnitude.cols() != band.lps.cols())
    throw InvalidArgument("from_masked: magnitude shape does not match the LPS band");
  if (!masked_magnitude.allFinite() || (masked_magnitude.array() < 0.0).any())
    throw InvalidArgument("from_masked: magnitude must be finite and nonnegative");

  ComplexSpectrogram spec;
  spec.frame_len = band.frame_len;
  spec.hop = band.hop;
  spec.sample_rate = band.sample_rate;
  const Eigen::Index f = band.lps.cols();
  spec.frames.resize(band.lps.rows(), f + band.high_band.cols());
  for (Eigen::Index j = 0; j < f; ++j)
    for (Eigen::Index n = 0; n < band.lps.rows(); ++n)
      spec.frames(n, j) = std::polar(masked_magnitude(n, j), band.phase(n, j));
  if (policy == HighBandPolicy::mixture)
    spec.frames.rightCols(band.high_band.cols()) = band.high_band;
  else
    spec.frames.rightCols(band.high_band.cols()).setZero();
  return spec;
}

}  // namespace pulmo
