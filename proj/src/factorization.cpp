#include "pulmo/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pulmo {

namespace {

mat random_nonnegative(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * (0.1 + 0.9 * dist(rng));
  return m;
}

double objective(const Eigen::Ref<const mat>& V, const mat& W, const mat& H, double lambda) {
  return (V - W * H).squaredNorm() + lambda * H.sum();
}

}  // namespace

void sparse_nmf_updates(const Eigen::Ref<const mat>& V, mat& W, mat& H, double lambda, int iters,
                        double tolerance, std::vector<double>& history, int check_every) {
  check_every = std::max(check_every, 1);
  double prev = objective(V, W, H, lambda);
  if (history.empty()) history.push_back(prev);
  mat num, den;
  for (int it = 0; it < iters; ++it) {
    num.noalias() = W.transpose() * V;
    den.noalias() = (W.transpose() * W) * H;
    H.array() *= num.array() / (den.array() + lambda + kMuEpsilon);
    num.noalias() = V * H.transpose();
    den.noalias() = W * (H * H.transpose());
    W.array() *= num.array() / (den.array() + kMuEpsilon);

    if ((it + 1) % check_every != 0 && it + 1 != iters) continue;
    const double cur = objective(V, W, H, lambda);
    history.push_back(cur);
    if (tolerance > 0.0 && prev > 0.0 && (prev - cur) / prev < tolerance) break;
    prev = cur;
  }
}

NmfFactors nmf(const Eigen::Ref<const mat>& V, const NmfOptions& options) {
  if (!V.allFinite()) throw InvalidArgument("nmf: V must be finite");
  if ((V.array() < 0.0).any()) throw InvalidArgument("nmf: V has negative entries");
  if (options.rank < 1 || options.rank > std::min(V.rows(), V.cols()))
    throw InvalidArgument("nmf: rank must be in [1, min(F, N)]");

  std::mt19937_64 rng(options.seed);
  const double scale = std::sqrt(std::max(V.mean(), 1e-300) / options.rank);
  NmfFactors f;
  f.W = random_nonnegative(V.rows(), options.rank, scale, rng);
  f.H = random_nonnegative(options.rank, V.cols(), scale, rng);
  sparse_nmf_updates(V, f.W, f.H, 0.0, options.max_iters, options.tolerance, f.loss_history);
  return f;
}

std::array<std::size_t, 3> ClusterAssignment::counts() const {
  std::array<std::size_t, 3> c{0, 0, 0};
  for (auto l : labels) ++c[std::size_t(l)];
  return c;
}

std::size_t ClusterAssignment::count(Role r) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) n += role(j) == r;
  return n;
}

ClusterAssignment sparse_nmf_cluster(const Eigen::Ref<const mat>& P, const ClusterOptions& options) {
  if (!P.allFinite() || (P.array() < 0.0).any())
    throw InvalidArgument("sparse_nmf_cluster: P must be finite and nonnegative");
  if (options.k < 2) throw InvalidArgument("sparse_nmf_cluster: k must be at least 2");

  const Eigen::Index m = P.rows();
  const vec means = P.rowwise().mean();
  const vec var = (P.colwise() - means).rowwise().squaredNorm() / double(std::max<Eigen::Index>(P.cols(), 1));
  const double max_var = m > 0 ? var.maxCoeff() : 0.0;

  ClusterAssignment out;
  out.labels.assign(std::size_t(m), ClusterLabel::shared);
  std::vector<Eigen::Index> informative;
  for (Eigen::Index j = 0; j < m; ++j)
    if (max_var > 0.0 && var[j] > 1e-12 * max_var) informative.push_back(j);
  const auto m_inf = Eigen::Index(informative.size());
  if (m_inf < options.k)
    throw InvalidArgument("sparse_nmf_cluster: k = " + std::to_string(options.k) + " exceeds the " +
                          std::to_string(m_inf) + " informative rows");

  // D x M_inf, unit columns, then unit Frobenius norm.
  mat V(P.cols(), m_inf);
  for (Eigen::Index c = 0; c < m_inf; ++c) {
    V.col(c) = P.row(informative[std::size_t(c)]).transpose();
    const double n = V.col(c).norm();
    if (n > 0.0) V.col(c) /= n;
  }
  V /= std::sqrt(double(m_inf));

  std::mt19937_64 rng(options.seed);
  const double scale = std::sqrt(std::max(V.mean(), 1e-300) / options.k);
  mat W = random_nonnegative(V.rows(), options.k, scale, rng);
  mat H = random_nonnegative(options.k, m_inf, scale, rng);
  std::vector<double> history;
  sparse_nmf_updates(V, W, H, options.lambda, options.max_iters, options.tolerance, history, 10);

  std::vector<int> lab(static_cast<std::size_t>(m_inf));
  std::vector<std::size_t> sizes(std::size_t(options.k), 0);
  for (Eigen::Index c = 0; c < m_inf; ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < options.k; ++r)
      if (H(r, c) > H(best, c)) best = r;
    lab[std::size_t(c)] = int(best);
    ++sizes[std::size_t(best)];
  }
  for (int r = 0; r < options.k; ++r) {
    if (sizes[std::size_t(r)] != 0) continue;
    Eigen::Index pick = -1;
    double best_share = -1.0;
    for (Eigen::Index c = 0; c < m_inf; ++c) {
      if (sizes[std::size_t(lab[std::size_t(c)])] < 2) continue;
      const double total = H.col(c).sum();
      const double share = total > 0.0 ? H(r, c) / total : 0.0;
      if (share > best_share) {
        best_share = share;
        pick = c;
      }
    }
    if (pick < 0) throw Error("sparse_nmf_cluster: cannot populate empty cluster");
    --sizes[std::size_t(lab[std::size_t(pick)])];
    lab[std::size_t(pick)] = r;
    ++sizes[std::size_t(r)];
  }
  for (Eigen::Index c = 0; c < m_inf; ++c)
    out.labels[std::size_t(informative[std::size_t(c)])] = ClusterLabel(lab[std::size_t(c)]);
  out.membership = std::move(H);
  return out;
}

double spectral_centroid(const Eigen::Ref<const vec>& spectrum, const Eigen::Ref<const vec>& freq_hz) {
  if (spectrum.size() != freq_hz.size()) throw InvalidArgument("spectral_centroid: axis length mismatch");
  if (spectrum.size() < 2) return 0.0;
  const auto s = spectrum.tail(spectrum.size() - 1);
  const double total = s.sum();
  if (!(total > 0.0)) return 0.0;
  return s.dot(freq_hz.tail(freq_hz.size() - 1)) / total;
}

void assign_cluster_roles(const Eigen::Ref<const mat>& P, const Eigen::Ref<const vec>& freq_hz,
                          ClusterAssignment& a) {
  if (Eigen::Index(a.labels.size()) != P.rows()) throw InvalidArgument("assign_cluster_roles: label count mismatch");
  if (freq_hz.size() != P.cols()) throw InvalidArgument("assign_cluster_roles: axis length mismatch");
  std::array<vec, 2> mean{vec::Zero(P.cols()), vec::Zero(P.cols())};
  std::array<std::size_t, 2> n{0, 0};
  for (std::size_t j = 0; j < a.labels.size(); ++j) {
    const auto l = a.labels[j];
    if (l == ClusterLabel::shared) continue;
    mean[std::size_t(l)] += P.row(Eigen::Index(j)).transpose();
    ++n[std::size_t(l)];
  }
  if (n[0] == 0 || n[1] == 0) throw InvalidArgument("assign_cluster_roles: two clusters required");
  std::array<double, 2> peak{0.0, 0.0};
  for (std::size_t c = 0; c < 2; ++c) {
    mean[c] /= double(n[c]);
    a.centroid_hz[c] = spectral_centroid(mean[c], freq_hz);
    Eigen::Index idx = 0;
    if (mean[c].size() > 1) mean[c].tail(mean[c].size() - 1).maxCoeff(&idx), ++idx;
    peak[c] = freq_hz[idx];
  }
  if (a.centroid_hz[0] != a.centroid_hz[1])
    a.heart_cluster = a.centroid_hz[1] > a.centroid_hz[0] ? 1 : 0;
  else
    a.heart_cluster = peak[1] > peak[0] ? 1 : 0;
}

}  // namespace pulmo
