#include "pulmo/separation.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include <cmath>

namespace pulmo {

namespace {

constexpr Eigen::Index kChunk = 256;

mat encode_frames(const nn::DaeModel& model, const Eigen::Ref<const mat>& frames) {
  mat out(frames.rows(), model.latent_size());
  for (Eigen::Index s = 0; s < frames.rows(); s += kChunk) {
    const Eigen::Index n = std::min(kChunk, frames.rows() - s);
    out.middleRows(s, n) = nn::encode(model, frames.middleRows(s, n));
  }
  return out;
}

mat decode_frames(const nn::DaeModel& model, const Eigen::Ref<const mat>& latent) {
  mat out(latent.rows(), model.input_dim);
  for (Eigen::Index s = 0; s < latent.rows(); s += kChunk) {
    const Eigen::Index n = std::min(kChunk, latent.rows() - s);
    out.middleRows(s, n) = nn::decode(model, latent.middleRows(s, n));
  }
  return out;
}

mat reconstruct_frames(const nn::DaeModel& model, const Eigen::Ref<const mat>& frames) {
  mat out(frames.rows(), model.input_dim);
  for (Eigen::Index s = 0; s < frames.rows(); s += kChunk) {
    const Eigen::Index n = std::min(kChunk, frames.rows() - s);
    out.middleRows(s, n) = nn::forward(model, frames.middleRows(s, n)).reconstruction;
  }
  return out;
}

std::string arch_name(nn::Architecture a) {
  switch (a) {
    case nn::Architecture::dae_f: return "dae-f";
    case nn::Architecture::dae_c: return "dae-c";
    case nn::Architecture::custom: break;
  }
  return "custom";
}

ClusterOptions cluster_options(const RunConfig& c) {
  ClusterOptions o;
  o.lambda = c.lambda_sparsity;
  o.max_iters = c.cluster_iters;
  o.seed = c.seed;
  return o;
}

SeparationResult masked_result(const FrontEnd& front, const Eigen::Ref<const mat>& heart_mag,
                               const Eigen::Ref<const mat>& lung_mag, const Eigen::Ref<const mat>& base,
                               const RunConfig& config) {
  SeparationResult r;
  auto masks = ratio_masks(heart_mag, lung_mag);
  r.heart = resynthesize(front, masks.first.cwiseProduct(base), config.high_band);
  r.lung = resynthesize(front, masks.second.cwiseProduct(base), config.high_band);
  r.masks = std::move(masks);
  return r;
}

void check_frames(const nn::DaeModel& model, const LatentMatrix& a, const LatentMatrix& b, Eigen::Index n) {
  if (a.units() != model.latent_size() || b.units() != model.latent_size())
    throw InvalidArgument("latent matrices do not match the model latent size");
  if (a.frames() != n || b.frames() != n) throw InvalidArgument("latent matrices do not match the frame count");
}

}  // namespace

Waveform FrontEnd::trim(const Waveform& padded) const {
  Waveform w;
  w.sample_rate = padded.sample_rate;
  w.samples = vec::Zero(original_len);
  const Eigen::Index avail = std::min(original_len, padded.size() - pad_front);
  if (avail > 0) w.samples.head(avail) = padded.samples.segment(pad_front, avail);
  return w;
}

FrontEnd analyze(const Waveform& mixture, const RunConfig& config) {
  validate(config);
  validate(mixture);
  if (mixture.duration() < kMinMixtureSeconds)
    throw InvalidArgument("mixture too short: " + std::to_string(mixture.duration()) + " s (need >= 3 s)");
  FrontEnd fe;
  fe.original_len = mixture.size();
  fe.pad_front = config.frame_len / 2;
  fe.sample_rate = mixture.sample_rate;
  const Eigen::Index needed = fe.pad_front + mixture.size() + config.frame_len / 2;
  const Eigen::Index frames = (needed - config.frame_len + config.hop - 1) / config.hop + 1;
  const Eigen::Index padded_len = (frames - 1) * config.hop + config.frame_len;
  Waveform padded{vec::Zero(padded_len), mixture.sample_rate};
  padded.samples.segment(fe.pad_front, mixture.size()) = mixture.samples;
  fe.lps = to_lps(stft(padded, config.frame_len, config.hop), config.band_hi);
  return fe;
}

Waveform resynthesize(const FrontEnd& front, const Eigen::Ref<const mat>& magnitude, HighBandPolicy policy) {
  return front.trim(istft(from_masked(front.lps, magnitude, policy)));
}

LatentMatrix latent_trajectories(const nn::DaeModel& model, const LpsBand& lps) {
  if (lps.band_bins() != model.input_dim)
    throw InvalidArgument("latent_trajectories: model expects " + std::to_string(model.input_dim) +
                          " features, LPS band has " + std::to_string(lps.band_bins()));
  LatentMatrix out;
  out.L = encode_frames(model, lps.lps).transpose();
  out.model_ref = arch_name(model.architecture) + "/seed=" + std::to_string(model.seed);
  out.frame_rate_hz = lps.frame_rate();
  return out;
}

PeriodicCodeMatrix modulation_spectra(const Eigen::Ref<const mat>& rows, double frame_rate_hz) {
  const Eigen::Index n = rows.cols();
  if (n < 8) throw InvalidArgument("modulation analysis needs at least 8 frames");
  const Eigen::Index bins = n / 2 + 1;
  PeriodicCodeMatrix out;
  out.P.resize(rows.rows(), bins);
  out.mod_freq_hz = vec::LinSpaced(bins, 0.0, double(bins - 1)) * (frame_rate_hz / double(n));

  Eigen::FFT<real> fft;
  fft.SetFlag(Eigen::FFT<real>::HalfSpectrum);
  vec row(n);
  cvec spec;
  for (Eigen::Index j = 0; j < rows.rows(); ++j) {
    row = rows.row(j).transpose();
    fft.fwd(spec, row);
    out.P.row(j) = spec.head(bins).cwiseAbs().transpose();
  }
  out.P.col(0).setZero();
  return out;
}

PeriodicCodeMatrix mfa(const LatentMatrix& traj) { return modulation_spectra(traj.L, traj.frame_rate_hz); }

ClusterAssignment pc_group(const LatentMatrix& traj, const ClusterOptions& options) {
  const PeriodicCodeMatrix pcm = mfa(traj);
  ClusterAssignment a = sparse_nmf_cluster(pcm.P, options);
  assign_cluster_roles(pcm.P, pcm.mod_freq_hz, a);
  return a;
}

LatentMatrix deactivate(const LatentMatrix& traj, const ClusterAssignment& assignment, Role target) {
  if (Eigen::Index(assignment.labels.size()) != traj.units())
    throw InvalidArgument("deactivate: assignment does not cover every latent unit");
  if (target == Role::shared) throw InvalidArgument("deactivate: target must be heart or lung");
  LatentMatrix out = traj;
  for (Eigen::Index j = 0; j < traj.units(); ++j) {
    const auto label = assignment.labels[std::size_t(j)];
    if (label != ClusterLabel::cluster0 && label != ClusterLabel::cluster1 && label != ClusterLabel::shared)
      throw InvalidArgument("deactivate: unknown label");
    const Role r = assignment.role(std::size_t(j));
    if (r == target || r == Role::shared) continue;
    out.L.row(j).setConstant(traj.L.row(j).minCoeff());
  }
  return out;
}

LpsPair reconstruct_direct(const nn::DaeModel& model, const LatentMatrix& heart, const LatentMatrix& lung,
                           const LpsBand& lps) {
  check_frames(model, heart, lung, lps.num_frames());
  LpsPair out;
  out.heart = denormalize_lps(lps, decode_frames(model, heart.L.transpose()));
  out.lung = denormalize_lps(lps, decode_frames(model, lung.L.transpose()));
  return out;
}

std::pair<mat, mat> ratio_masks(const Eigen::Ref<const mat>& heart_mag, const Eigen::Ref<const mat>& lung_mag) {
  if (heart_mag.rows() != lung_mag.rows() || heart_mag.cols() != lung_mag.cols())
    throw InvalidArgument("ratio_masks: shape mismatch");
  const auto denom = heart_mag.array() + lung_mag.array() + kMaskEpsilon;
  mat mh = ((heart_mag.array() + 0.5 * kMaskEpsilon) / denom).matrix();
  mat ml = ((lung_mag.array() + 0.5 * kMaskEpsilon) / denom).matrix();
  return {std::move(mh), std::move(ml)};
}

SeparationResult reconstruct_mask(const nn::DaeModel& model, const LatentMatrix& heart, const LatentMatrix& lung,
                                  const FrontEnd& front, const RunConfig& config) {
  const LpsPair decoded = reconstruct_direct(model, heart, lung, front.lps);
  const mat heart_mag = (decoded.heart.array() * 0.5).exp().matrix();
  const mat lung_mag = (decoded.lung.array() * 0.5).exp().matrix();
  const mat base = config.mask_base == MaskBase::mixture
                       ? band_magnitude(front.lps)
                       : lps_to_magnitude(front.lps, reconstruct_frames(model, front.lps.lps));
  return masked_result(front, heart_mag, lung_mag, base, config);
}

DaeAnalysis analyze_dae(const Waveform& mixture, nn::Architecture arch, const RunConfig& config) {
  DaeAnalysis a;
  a.front = analyze(mixture, config);
  const int dim = int(a.front.lps.band_bins());
  if (arch == nn::Architecture::dae_f)
    a.model = nn::build_dae_f(dim, config.seed);
  else if (arch == nn::Architecture::dae_c)
    a.model = nn::build_dae_c(dim, config.seed);
  else
    throw InvalidArgument("analyze_dae: unsupported architecture");
  nn::TrainOptions opt;
  opt.epochs = config.epochs;
  opt.learning_rate = config.lr;
  opt.batch_size = config.batch;
  opt.patience = config.patience;
  nn::train(a.model, a.front.lps.lps, opt);
  a.latent = latent_trajectories(a.model, a.front.lps);
  return a;
}

SeparationResult separate_from_analysis(const DaeAnalysis& an, Grouping grouping, const RunConfig& config) {
  PeriodicCodeMatrix pcm = mfa(an.latent);
  ClusterAssignment assignment =
      sparse_nmf_cluster(grouping == Grouping::periodic ? pcm.P : an.latent.L, cluster_options(config));
  assign_cluster_roles(pcm.P, pcm.mod_freq_hz, assignment);

  LatentMatrix z_heart = deactivate(an.latent, assignment, Role::heart);
  LatentMatrix z_lung = deactivate(an.latent, assignment, Role::lung);

  SeparationResult r;
  if (config.mask_mode == MaskMode::mask) {
    r = reconstruct_mask(an.model, z_heart, z_lung, an.front, config);
  } else {
    const LpsPair decoded = reconstruct_direct(an.model, z_heart, z_lung, an.front.lps);
    r.heart = resynthesize(an.front, (decoded.heart.array() * 0.5).exp().matrix(), config.high_band);
    r.lung = resynthesize(an.front, (decoded.lung.array() * 0.5).exp().matrix(), config.high_band);
  }
  r.assignment = std::move(assignment);
  r.training_stats = an.model.training_stats;
  if (an.model.architecture == nn::Architecture::dae_f)
    r.method = "pc-dae-f";
  else
    r.method = grouping == Grouping::periodic ? "pc-dae-c" : "dc-dae";
  r.intermediates = Intermediates{an.latent, std::move(z_heart), std::move(z_lung), std::move(pcm)};
  return r;
}

SeparationResult separate_pcdae(const Waveform& mixture, DaeVariant variant, const RunConfig& config) {
  const auto arch = variant == DaeVariant::F ? nn::Architecture::dae_f : nn::Architecture::dae_c;
  return separate_from_analysis(analyze_dae(mixture, arch, config), Grouping::periodic, config);
}

SeparationResult separate_dc_dae(const Waveform& mixture, const RunConfig& config) {
  return separate_from_analysis(analyze_dae(mixture, nn::Architecture::dae_c, config), Grouping::direct, config);
}

namespace {

SeparationResult separate_nmf(const Waveform& mixture, bool periodic, const RunConfig& config) {
  const FrontEnd front = analyze(mixture, config);
  const mat mixture_mag = band_magnitude(front.lps);
  NmfOptions nopt;
  nopt.rank = config.nmf_rank;
  nopt.max_iters = config.nmf_iters;
  nopt.seed = config.seed;
  const NmfFactors f = nmf(mixture_mag.transpose(), nopt);

  const double frame_rate = front.lps.frame_rate();
  ClusterAssignment a = periodic ? sparse_nmf_cluster(modulation_spectra(f.H, frame_rate).P, cluster_options(config))
                                 : sparse_nmf_cluster(f.H, cluster_options(config));

  // Roles from the modulation spectrum of each group's summed activation.
  mat summed = mat::Zero(2, f.H.cols());
  for (std::size_t r = 0; r < a.labels.size(); ++r)
    if (a.labels[r] != ClusterLabel::shared) summed.row(Eigen::Index(a.labels[r])) += f.H.row(Eigen::Index(r));
  const PeriodicCodeMatrix group_spectra = modulation_spectra(summed, frame_rate);
  ClusterAssignment groups;
  groups.labels = {ClusterLabel::cluster0, ClusterLabel::cluster1};
  assign_cluster_roles(group_spectra.P, group_spectra.mod_freq_hz, groups);
  a.centroid_hz = groups.centroid_hz;
  a.heart_cluster = groups.heart_cluster;

  mat w_heart = mat::Zero(f.W.rows(), f.W.cols());
  mat w_lung = w_heart;
  for (std::size_t r = 0; r < a.labels.size(); ++r) {
    const Role role = a.role(r);
    if (role != Role::lung) w_heart.col(Eigen::Index(r)) = f.W.col(Eigen::Index(r));
    if (role != Role::heart) w_lung.col(Eigen::Index(r)) = f.W.col(Eigen::Index(r));
  }
  const mat heart_mag = (w_heart * f.H).transpose();
  const mat lung_mag = (w_lung * f.H).transpose();

  SeparationResult r;
  if (config.mask_mode == MaskMode::mask) {
    const mat base = config.mask_base == MaskBase::mixture ? mixture_mag : mat((f.W * f.H).transpose());
    r = masked_result(front, heart_mag, lung_mag, base, config);
  } else {
    r.heart = resynthesize(front, heart_mag, config.high_band);
    r.lung = resynthesize(front, lung_mag, config.high_band);
  }
  r.assignment = std::move(a);
  r.method = periodic ? "pc-nmf" : "dc-nmf";
  return r;
}

}  // namespace

SeparationResult separate_dc_nmf(const Waveform& mixture, const RunConfig& config) {
  return separate_nmf(mixture, false, config);
}

SeparationResult separate_pc_nmf(const Waveform& mixture, const RunConfig& config) {
  SeparationResult r = separate_nmf(mixture, config.nmf_periodicity, config);
  r.method = "pc-nmf";
  return r;
}

SeparationResult separate(const Waveform& mixture, const RunConfig& config) {
  switch (config.method) {
    case Method::pc_dae_c: return separate_pcdae(mixture, DaeVariant::C, config);
    case Method::pc_dae_f: return separate_pcdae(mixture, DaeVariant::F, config);
    case Method::dc_dae: return separate_dc_dae(mixture, config);
    case Method::pc_nmf: return separate_pc_nmf(mixture, config);
    case Method::dc_nmf: return separate_dc_nmf(mixture, config);
  }
  throw InvalidArgument("unknown method");
}

mat pca_scatter(const Eigen::Ref<const mat>& rows) {
  if (rows.rows() < 2) throw InvalidArgument("pca_scatter: need at least two rows");
  const mat centered = rows.rowwise() - rows.colwise().mean();
  mat coords(rows.rows(), 2);
  if (centered.cols() <= centered.rows()) {
    Eigen::SelfAdjointEigenSolver<mat> es(centered.transpose() * centered / double(rows.rows() - 1));
    const Eigen::Index d = centered.cols();
    mat dirs = mat::Zero(d, 2);
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) dirs.col(k) = es.eigenvectors().col(d - 1 - k);
    coords = centered * dirs;
  } else {
    // Same projection through the Gram matrix when there are fewer rows than dimensions.
    Eigen::SelfAdjointEigenSolver<mat> es(centered * centered.transpose());
    const Eigen::Index m = centered.rows();
    // Round-off eigenvalues would otherwise surface through the square root.
    const double floor = 1e-12 * std::max(es.eigenvalues()[m - 1], 0.0);
    for (Eigen::Index k = 0; k < 2; ++k) {
      const double ev = es.eigenvalues()[m - 1 - k];
      const double lambda = ev > floor ? ev : 0.0;
      coords.col(k) = es.eigenvectors().col(m - 1 - k) * std::sqrt(lambda);
    }
  }
  for (Eigen::Index k = 0; k < 2; ++k) {
    Eigen::Index idx;
    coords.col(k).cwiseAbs().maxCoeff(&idx);
    if (coords(idx, k) < 0.0) coords.col(k) *= -1.0;
  }
  return coords;
}

}  // namespace pulmo
