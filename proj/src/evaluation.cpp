#include "pulmo/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace pulmo {

namespace {

double ratio_db(double num, double den) {
  if (den <= 0.0) return num > 0.0 ? kScoreCapDb : 0.0;
  if (num <= 0.0) return -kScoreCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kScoreCapDb, kScoreCapDb);
}

}  // namespace

double rms(const Eigen::Ref<const vec>& x) {
  return x.size() == 0 ? 0.0 : std::sqrt(x.squaredNorm() / double(x.size()));
}

double snr_db(const Eigen::Ref<const vec>& target, const Eigen::Ref<const vec>& noise) {
  return 10.0 * std::log10(target.squaredNorm() / noise.squaredNorm());
}

MixResult mix_at_snr(const Waveform& target, const Waveform& noise, double snr) {
  validate(target);
  validate(noise);
  if (target.sample_rate != noise.sample_rate) throw InvalidArgument("mix_at_snr: sample rates differ");
  if (noise.size() < target.size())
    throw InvalidArgument("mix_at_snr: noise (" + std::to_string(noise.size()) + " samples) shorter than target (" +
                          std::to_string(target.size()) + ")");
  if (!std::isfinite(snr)) throw InvalidArgument("mix_at_snr: SNR must be finite");
  const vec n = noise.samples.head(target.size());
  const double rt = rms(target.samples);
  const double rn = rms(n);
  if (rt == 0.0) throw InvalidArgument("mix_at_snr: target is silent");
  if (rn == 0.0) throw InvalidArgument("mix_at_snr: noise is silent");

  MixResult r;
  r.gain = (rt / rn) * std::pow(10.0, -snr / 20.0);
  r.target = target;
  r.noise = Waveform{n * r.gain, target.sample_rate};
  r.mixture = Waveform{r.target.samples + r.noise.samples, target.sample_rate};
  const double peak = r.mixture.samples.cwiseAbs().maxCoeff();
  if (peak > 1.0) {
    r.rescale = 1.0 / peak;
    r.mixture.samples *= r.rescale;
    r.target.samples *= r.rescale;
    r.noise.samples *= r.rescale;
  }
  r.achieved_snr_db = snr_db(r.target.samples, r.noise.samples);
  return r;
}

BssDecomposition bss_decompose(const Eigen::Ref<const vec>& estimate, std::span<const vec, 2> refs, int which) {
  if (which != 0 && which != 1) throw InvalidArgument("bss_decompose: source index must be 0 or 1");
  const vec& s = refs[std::size_t(which)];
  const vec& other = refs[std::size_t(1 - which)];
  if (s.size() != estimate.size() || other.size() != estimate.size())
    throw InvalidArgument("bss_decompose: length mismatch");
  const double ss = s.squaredNorm();
  if (ss == 0.0 || other.squaredNorm() == 0.0) throw InvalidArgument("bss_decompose: zero-energy reference");

  BssDecomposition d;
  d.s_target = (estimate.dot(s) / ss) * s;
  const vec o = other - (other.dot(s) / ss) * s;
  const double oo = o.squaredNorm();
  const vec residual = estimate - d.s_target;
  // Collinear references leave no interference subspace.
  if (oo > 1e-24 * other.squaredNorm())
    d.e_interf = (residual.dot(o) / oo) * o;
  else
    d.e_interf = vec::Zero(estimate.size());
  d.e_artif = residual - d.e_interf;
  d.e_noise = vec::Zero(estimate.size());
  return d;
}

BssScores score(const BssDecomposition& d) {
  const double target = d.s_target.squaredNorm();
  BssScores s;
  s.sdr = ratio_db(target, (d.e_interf + d.e_noise + d.e_artif).squaredNorm());
  s.sir = ratio_db(target, d.e_interf.squaredNorm());
  s.sar = ratio_db((d.s_target + d.e_interf + d.e_noise).squaredNorm(), d.e_artif.squaredNorm());
  return s;
}

PairEvaluation evaluate_pair(std::span<const vec, 2> estimates, std::span<const vec, 2> refs) {
  PairEvaluation direct, swapped;
  swapped.swapped = true;
  for (int i = 0; i < 2; ++i) {
    direct.scores[std::size_t(i)] = score(bss_decompose(estimates[std::size_t(i)], refs, i));
    swapped.scores[std::size_t(i)] = score(bss_decompose(estimates[std::size_t(1 - i)], refs, i));
  }
  const double a = direct.scores[0].sdr + direct.scores[1].sdr;
  const double b = swapped.scores[0].sdr + swapped.scores[1].sdr;
  return b > a ? swapped : direct;
}

}  // namespace pulmo
