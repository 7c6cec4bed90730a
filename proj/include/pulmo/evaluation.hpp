#ifndef PULMO_EVALUATION_HPP
#define PULMO_EVALUATION_HPP

#include "pulmo/signal_io.hpp"

#include <array>
#include <span>

namespace pulmo {

inline constexpr double kScoreCapDb = 200.0;

struct MixResult {
  Waveform mixture;
  Waveform target;  // scaled reference actually contained in the mixture
  Waveform noise;
  double gain = 1.0;          // applied to the noise before summing
  double rescale = 1.0;       // common factor applied when the mixture peak exceeded 1
  double achieved_snr_db = 0.0;
};

double rms(const Eigen::Ref<const vec>& x);

/// SNR in dB of `target` against `noise`.
double snr_db(const Eigen::Ref<const vec>& target, const Eigen::Ref<const vec>& noise);

/// Mixes target + g * noise with g chosen for the requested SNR. Longer
/// noise is truncated; shorter noise is an error.
MixResult mix_at_snr(const Waveform& target, const Waveform& noise, double snr_db);

/// Gain-only BSS decomposition of an estimate against two references.
struct BssDecomposition {
  vec s_target;
  vec e_interf;
  vec e_artif;
  vec e_noise;  // always zero
};

struct BssScores {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

BssDecomposition bss_decompose(const Eigen::Ref<const vec>& estimate, std::span<const vec, 2> refs,
                               int which);

/// 10 log10 ratios, clamped to +-kScoreCapDb (zero denominators give the cap).
BssScores score(const BssDecomposition& d);

/// Scores both estimate-to-reference pairings and keeps the one with the
/// larger summed SDR. scores[i] belongs to reference i.
struct PairEvaluation {
  std::array<BssScores, 2> scores;
  bool swapped = false;  // true when estimate 1 was matched to reference 0
};

PairEvaluation evaluate_pair(std::span<const vec, 2> estimates, std::span<const vec, 2> refs);

}  // namespace pulmo

#endif
