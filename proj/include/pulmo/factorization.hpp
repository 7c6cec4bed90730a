#ifndef PULMO_FACTORIZATION_HPP
#define PULMO_FACTORIZATION_HPP

#include "pulmo/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace pulmo {

inline constexpr std::uint64_t kDefaultSeed = 17;
inline constexpr double kMuEpsilon = 1e-12;

/// V (F x N) ~= W (F x A) * H (A x N), all entries nonnegative.
struct NmfFactors {
  mat W;
  mat H;
  std::vector<double> loss_history;  // objective after each update, [0] = init

  Eigen::Index rank() const { return W.cols(); }
};

struct NmfOptions {
  int rank = 20;
  int max_iters = 200;
  // Stop once (prev - cur) / prev falls below this; 0 runs all iterations.
  double tolerance = 1e-6;
  std::uint64_t seed = kDefaultSeed;
};

/// Lee-Seung multiplicative updates for the squared Frobenius objective.
NmfFactors nmf(const Eigen::Ref<const mat>& V, const NmfOptions& options = {});

/// Multiplicative updates for ||V - WH||_F^2 + lambda * |H|_1 starting from
/// the given factors. The objective is evaluated (and appended to
/// `history`) every `check_every` iterations; the relative-improvement stop
/// compares consecutive evaluations.
void sparse_nmf_updates(const Eigen::Ref<const mat>& V, mat& W, mat& H, double lambda, int iters,
                        double tolerance, std::vector<double>& history, int check_every = 1);

/// Label of one row in a two-way clustering. Rows without information
/// (zero variance) are `shared`.
enum class ClusterLabel : std::int8_t { cluster0 = 0, cluster1 = 1, shared = 2 };
enum class Role { heart, lung, shared };

struct ClusterAssignment {
  std::vector<ClusterLabel> labels;
  std::array<double, 2> centroid_hz{0.0, 0.0};
  int heart_cluster = 0;
  mat membership;  // k x M_informative encoding matrix from the clustering

  Role role(std::size_t j) const {
    if (labels[j] == ClusterLabel::shared) return Role::shared;
    return int(labels[j]) == heart_cluster ? Role::heart : Role::lung;
  }
  /// Number of rows per {cluster0, cluster1, shared}.
  std::array<std::size_t, 3> counts() const;
  std::size_t count(Role r) const;
};

struct ClusterOptions {
  int k = 2;
  double lambda = 0.1;
  int max_iters = 1000;
  double tolerance = 1e-7;
  std::uint64_t seed = kDefaultSeed;
};

/// Sparse-NMF clustering of the rows of P (M x D, nonnegative). Each
/// informative row is scaled to unit L2 norm and the transposed matrix to
/// unit Frobenius norm before factorisation; row j gets the argmax of its
/// encoding column (ties to the lower index). An empty cluster receives the
/// row with the largest membership share towards it.
ClusterAssignment sparse_nmf_cluster(const Eigen::Ref<const mat>& P, const ClusterOptions& options = {});

/// Spectral centroid (Hz) of a nonnegative spectrum, DC column excluded.
/// Returns 0 for an all-zero spectrum.
double spectral_centroid(const Eigen::Ref<const vec>& spectrum, const Eigen::Ref<const vec>& freq_hz);

/// Names the cluster whose mean modulation spectrum has the larger centroid
/// `heart`. Ties go to the larger peak frequency, then to cluster 0.
void assign_cluster_roles(const Eigen::Ref<const mat>& P, const Eigen::Ref<const vec>& freq_hz,
                          ClusterAssignment& assignment);

}  // namespace pulmo

#endif
