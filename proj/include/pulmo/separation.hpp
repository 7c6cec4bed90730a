#ifndef PULMO_SEPARATION_HPP
#define PULMO_SEPARATION_HPP

#include "pulmo/config.hpp"
#include "pulmo/factorization.hpp"
#include "pulmo/nn.hpp"
#include "pulmo/spectral.hpp"

#include <optional>
#include <string>
#include <utility>

namespace pulmo {

/// Row j is the trajectory of latent unit j over the N analysed frames.
struct LatentMatrix {
  mat L;  // M x N
  std::string model_ref;
  double frame_rate_hz = 62.5;

  Eigen::Index units() const { return L.rows(); }
  Eigen::Index frames() const { return L.cols(); }
};

/// Per-unit modulation magnitude spectra. Column d is d * frame_rate / N Hz.
struct PeriodicCodeMatrix {
  mat P;  // M x (N/2 + 1), DC column zeroed
  vec mod_freq_hz;
};

struct Intermediates {
  LatentMatrix mixture;
  LatentMatrix heart;
  LatentMatrix lung;
  PeriodicCodeMatrix periodic;
};

struct SeparationResult {
  Waveform heart;
  Waveform lung;
  std::optional<std::pair<mat, mat>> masks;  // (heart, lung), N x F
  ClusterAssignment assignment;
  std::string method;
  std::optional<Intermediates> intermediates;
  std::vector<double> training_stats;
};

/// Padded STFT front end shared by every method. The mixture is padded by
/// frame_len/2 zeros on both sides (plus hop alignment) so reconstructions
/// cover every input sample; `trim` maps back to the original length.
struct FrontEnd {
  LpsBand lps;
  Eigen::Index original_len = 0;
  Eigen::Index pad_front = 0;
  int sample_rate = 8000;

  Waveform trim(const Waveform& padded) const;
};

FrontEnd analyze(const Waveform& mixture, const RunConfig& config);

/// Resynthesises a waveform from a band magnitude with the mixture phase.
Waveform resynthesize(const FrontEnd& front, const Eigen::Ref<const mat>& magnitude, HighBandPolicy policy);

LatentMatrix latent_trajectories(const nn::DaeModel& model, const LpsBand& lps);

/// Row-wise |DFT| of trajectories sampled at `frame_rate_hz`, DC removed.
PeriodicCodeMatrix modulation_spectra(const Eigen::Ref<const mat>& rows, double frame_rate_hz);
PeriodicCodeMatrix mfa(const LatentMatrix& traj);

/// mfa -> sparse_nmf_cluster -> assign_cluster_roles.
ClusterAssignment pc_group(const LatentMatrix& traj, const ClusterOptions& options = {});

/// Rows whose role is neither `target` nor shared become constant at their
/// own minimum.
LatentMatrix deactivate(const LatentMatrix& traj, const ClusterAssignment& assignment, Role target);

/// Decoded natural-log power spectra (N x F) for each source.
struct LpsPair {
  mat heart;
  mat lung;
};
LpsPair reconstruct_direct(const nn::DaeModel& model, const LatentMatrix& heart, const LatentMatrix& lung,
                           const LpsBand& lps);

inline constexpr double kMaskEpsilon = 1e-12;

/// Complementary ratio masks: M_h = (m_h + eps/2) / (m_h + m_l + eps).
std::pair<mat, mat> ratio_masks(const Eigen::Ref<const mat>& heart_mag, const Eigen::Ref<const mat>& lung_mag);

SeparationResult reconstruct_mask(const nn::DaeModel& model, const LatentMatrix& heart, const LatentMatrix& lung,
                                  const FrontEnd& front, const RunConfig& config);

/// Mixture analysed by a DAE trained on its own frames.
struct DaeAnalysis {
  FrontEnd front;
  nn::DaeModel model;
  LatentMatrix latent;
};

enum class Grouping { periodic, direct };

DaeAnalysis analyze_dae(const Waveform& mixture, nn::Architecture arch, const RunConfig& config);
SeparationResult separate_from_analysis(const DaeAnalysis& analysis, Grouping grouping, const RunConfig& config);

enum class DaeVariant { F, C };

SeparationResult separate_pcdae(const Waveform& mixture, DaeVariant variant, const RunConfig& config);
SeparationResult separate_dc_dae(const Waveform& mixture, const RunConfig& config);
SeparationResult separate_dc_nmf(const Waveform& mixture, const RunConfig& config);
SeparationResult separate_pc_nmf(const Waveform& mixture, const RunConfig& config);

/// Dispatches on config.method.
SeparationResult separate(const Waveform& mixture, const RunConfig& config);

/// Rows projected onto the top-2 principal directions (M x 2). Columns are
/// sign-normalised so the largest-magnitude entry is positive.
mat pca_scatter(const Eigen::Ref<const mat>& rows);

inline constexpr double kMinMixtureSeconds = 3.0;

}  // namespace pulmo

#endif
