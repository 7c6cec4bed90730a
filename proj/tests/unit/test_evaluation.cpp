#include "pulmo/evaluation.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/QR>
#include <cmath>

using namespace pulmo;

namespace {

// Three mutually orthogonal unit-energy signals.
std::array<vec, 3> orthonormal(Eigen::Index n, std::uint64_t seed) {
  const mat r = test::random_matrix(n, 3, seed, -1, 1);
  const Eigen::HouseholderQR<mat> qr(r);
  const mat q = qr.householderQ() * mat::Identity(n, 3);
  return {q.col(0), q.col(1), q.col(2)};
}

Waveform wave(const vec& x) {
  Waveform w;
  w.samples = x;
  return w;
}

vec sine(Eigen::Index n, double hz, double amp) {
  vec x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = amp * std::sin(2 * test::kPi * hz * double(i) / 8000.0);
  return x;
}

}  // namespace

TEST_CASE("mixing gain follows the power-ratio formula") {
  SUBCASE("equal RMS at 0 dB") {
    const auto m = mix_at_snr(wave(sine(8000, 100, 0.3)), wave(sine(8000, 170, 0.3)), 0.0);
    CHECK(m.gain == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("RMS 0.2 over 0.1 at 6 dB") {
    const vec t = vec::Constant(8000, 0.2), n = vec::Constant(8000, 0.1);
    const auto m = mix_at_snr(wave(t), wave(n), 6.0);
    CHECK(m.gain == doctest::Approx(2.0 * std::pow(10.0, -0.3)).epsilon(1e-12));
    CHECK(m.gain == doctest::Approx(1.00237).epsilon(1e-5));
    // Independent oracle: 10 log10(P_t / (g^2 P_n)).
    CHECK(10 * std::log10(0.04 / (m.gain * m.gain * 0.01)) == doctest::Approx(6.0));
  }
  SUBCASE("equal RMS at -6 dB") {
    const auto m = mix_at_snr(wave(sine(8000, 100, 0.1)), wave(sine(8000, 170, 0.1)), -6.0);
    CHECK(m.gain == doctest::Approx(1.9953).epsilon(1e-4));
  }
}

TEST_CASE("achieved SNR matches every requested level") {
  const vec t = test::random_matrix(16000, 1, 1, -0.9, 0.9).col(0);
  const vec n = test::random_matrix(20000, 1, 2, -0.9, 0.9).col(0);
  for (double snr : {-6.0, -2.0, 0.0, 2.0, 6.0}) {
    const auto m = mix_at_snr(wave(t), wave(n), snr);
    CHECK(m.mixture.size() == 16000);
    CHECK(std::abs(m.achieved_snr_db - snr) <= 0.01);
    CHECK(std::abs(snr_db(m.target.samples, m.noise.samples) - snr) <= 0.01);
    CHECK(m.mixture.samples.cwiseAbs().maxCoeff() <= 1.0);
    CHECK((m.mixture.samples - m.target.samples - m.noise.samples).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mixing input validation") {
  CHECK_THROWS_AS(mix_at_snr(wave(vec::Ones(100)), wave(vec::Ones(50)), 0.0), InvalidArgument);
  CHECK_THROWS_AS(mix_at_snr(wave(vec::Ones(100)), wave(vec::Zero(100)), 0.0), InvalidArgument);
}

TEST_CASE("BSS decomposition") {
  const auto [a, b, c] = orthonormal(4000, 3);
  const std::array<vec, 2> refs{a, b};

  SUBCASE("perfect estimate") {
    const auto d = bss_decompose(a, refs, 0);
    CHECK((d.s_target - a).norm() < 1e-12);
    CHECK(d.e_interf.norm() < 1e-12);
    CHECK(d.e_artif.norm() < 1e-12);
    const auto s = score(d);
    CHECK(s.sdr == kScoreCapDb);
    CHECK(s.sir == kScoreCapDb);
    CHECK(s.sar == kScoreCapDb);
  }
  SUBCASE("gain is absorbed") {
    const auto d = bss_decompose(2 * a, refs, 0);
    CHECK((d.s_target - 2 * a).norm() < 1e-12);
    CHECK(score(d).sdr == kScoreCapDb);
  }
  SUBCASE("interference only") {
    const auto d = bss_decompose(a + 0.5 * b, refs, 0);
    CHECK(d.e_interf.squaredNorm() == doctest::Approx(0.25));
    CHECK(d.e_artif.norm() < 1e-12);
    CHECK(std::abs(score(d).sir - 6.02) <= 0.01);
    CHECK(score(d).sir == doctest::Approx(10 * std::log10(4.0)));
  }
  SUBCASE("orthogonal artifact at one percent energy") {
    const auto s = score(bss_decompose(a + 0.1 * c, refs, 0));
    CHECK(std::abs(s.sdr - 20.0) <= 0.01);
    CHECK(std::abs(s.sar - 20.0) <= 0.01);
    CHECK(s.sir == kScoreCapDb);
  }
  SUBCASE("scale invariance") {
    const vec est = a + 0.3 * b + 0.2 * c;
    const auto base = score(bss_decompose(est, refs, 0));
    for (double alpha : {0.1, 1.0, 10.0}) {
      const auto s = score(bss_decompose(alpha * est, refs, 0));
      CHECK(std::abs(s.sdr - base.sdr) <= 1e-6);
      CHECK(std::abs(s.sir - base.sir) <= 1e-6);
      CHECK(std::abs(s.sar - base.sar) <= 1e-6);
    }
  }
}

TEST_CASE("pair evaluation resolves the permutation") {
  const auto [a, b, c] = orthonormal(2000, 5);
  const std::array<vec, 2> refs{a, b};
  const std::array<vec, 2> est{a + 0.2 * b + 0.1 * c, b + 0.3 * a};
  const std::array<vec, 2> swapped{est[1], est[0]};
  const auto e1 = evaluate_pair(est, refs);
  const auto e2 = evaluate_pair(swapped, refs);
  CHECK_FALSE(e1.swapped);
  CHECK(e2.swapped);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(e1.scores[i].sdr == e2.scores[i].sdr);
    CHECK(e1.scores[i].sir == e2.scores[i].sir);
  }
  const auto perfect = evaluate_pair(refs, refs);
  CHECK(perfect.scores[0].sdr == kScoreCapDb);
  CHECK(perfect.scores[1].sdr == kScoreCapDb);
}
