#ifndef PULMO_TEST_SUPPORT_HPP
#define PULMO_TEST_SUPPORT_HPP

#include "pulmo/types.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace pulmo::test {

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pulmo_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline mat random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace pulmo::test

#endif
