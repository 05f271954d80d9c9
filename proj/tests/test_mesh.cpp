#include <doctest.h>

#include <random>

#include "meshfix/mesh.hpp"
#include "oracle.hpp"

using namespace meshfix;

TEST_CASE("ideal mzi: cross and bar states") {
  const Mat2 cross = ideal_mzi(0.0, 0.0);
  CHECK(std::abs(cross(0, 0)) < 1e-15);
  CHECK(std::abs(cross(0, 1) - kI) < 1e-15);
  CHECK(std::abs(cross(1, 0) - kI) < 1e-15);
  const Mat2 bar = ideal_mzi(kPi, 0.0);
  CHECK(std::abs(bar(0, 0) + 1.0) < 1e-15);
  CHECK(std::abs(bar(1, 1) - 1.0) < 1e-15);
  CHECK(std::abs(bar(0, 1)) < 1e-15);
}

TEST_CASE("ideal mzi matches the four-factor chain") {
  const Mat2 t = ideal_mzi(kPi / 2, kPi / 2);
  CHECK(oracle::max_abs(t, oracle::chain(kPi / 2, kPi / 2)) < 1e-14);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) CHECK(std::abs(std::abs(t(i, k)) - std::sqrt(0.5)) < 1e-14);
}

TEST_CASE("imperfect mzi") {
  SUBCASE("error-free limit") {
    CHECK(oracle::max_abs(imperfect_mzi(0.7, 1.3, 0, 0), ideal_mzi(0.7, 1.3)) < 1e-14);
  }
  SUBCASE("cross state with equal errors") {
    const Mat2 t = imperfect_mzi(0, 0, 0.02, 0.02);
    CHECK(std::abs(std::abs(t(0, 1)) - std::cos(0.04)) < 1e-14);
    CHECK(std::abs(std::abs(t(1, 0)) - std::cos(0.04)) < 1e-14);
    CHECK(std::abs(std::abs(t(0, 0)) - std::sin(0.04)) < 1e-14);
  }
  SUBCASE("closed form, factored form and chain agree on random draws") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ang(0, 2 * kPi), err(-0.3, 0.3);
    double worst = 0, worst_u = 0;
    for (int i = 0; i < 10000; ++i) {
      const double th = ang(rng), ph = ang(rng), a = err(rng), b = err(rng);
      const Mat2 t = imperfect_mzi(th, ph, a, b);
      worst = std::max(worst, oracle::max_abs(t, imperfect_mzi_factored(th, ph, a, b)));
      worst = std::max(worst, oracle::max_abs(t, oracle::chain(th, ph, a, b)));
      worst_u = std::max(worst_u, oracle::max_abs(t * t.adjoint(), Mat2::Identity()));
    }
    CHECK(worst < 1e-12);
    CHECK(worst_u < 1e-12);
  }
}

TEST_CASE("topology shapes") {
  for (int n : {1, 2, 3, 4, 7, 8}) {
    for (Layout l : {Layout::Rectangular, Layout::Triangular}) {
      const Topology t = make_topology(n, l);
      CHECK(t.size() == n * (n - 1) / 2);
      std::vector<int> level(n, -1);
      for (const auto& p : t.mzis) {
        REQUIRE(p.top_mode >= 0);
        REQUIRE(p.top_mode + 1 < n);
        // propagation order: a device never precedes one it depends on
        CHECK(p.col > level[p.top_mode]);
        CHECK(p.col > level[p.top_mode + 1]);
        level[p.top_mode] = level[p.top_mode + 1] = p.col;
      }
    }
  }
  const Topology r = make_topology(4, Layout::Rectangular);
  CHECK(r.n_columns() == 4);
  const Topology t = make_topology(4, Layout::Triangular);
  CHECK(t.n_columns() == 5);
  CHECK(triangular_diagonal(4, t.mzis.back()) == 0);
  CHECK(triangular_diagonal(4, t.mzis.front()) == 2);
}

TEST_CASE("mesh unitary") {
  SUBCASE("single device") {
    MeshProgram p = make_program(make_topology(2, Layout::Rectangular));
    p.settings[0] = {0.9, 2.1};
    CHECK(oracle::max_abs(mesh_unitary(p), ideal_mzi(0.9, 2.1)) < 1e-15);
  }
  SUBCASE("random programs are unitary; zero errors change nothing") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ang(0, 2 * kPi);
    for (Layout l : {Layout::Rectangular, Layout::Triangular}) {
      MeshProgram p = make_program(make_topology(9, l));
      for (auto& s : p.settings) s = {ang(rng), ang(rng)};
      for (auto& d : p.output_phases) d = ang(rng);
      const CMatrix U = mesh_unitary(p);
      CHECK(is_unitary(U, 1e-10));
      CHECK((mesh_unitary(p, ErrorMap(p.settings.size())) - U).cwiseAbs().maxCoeff() < 1e-12);
      CVector x = CVector::Random(9);
      CHECK((propagate(p, nullptr, x) - U * x).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    MeshProgram p = make_program(make_topology(3, Layout::Rectangular));
    CHECK_THROWS_AS(mesh_unitary(p, ErrorMap(1)), std::invalid_argument);
    p.output_phases.pop_back();
    CHECK_THROWS_AS(mesh_unitary(p), std::invalid_argument);
  }
}

TEST_CASE("matrix error") {
  const CMatrix u = haar_random_unitary(5, 11);
  CHECK(matrix_error(u, u) == 0.0);
  CHECK(matrix_error(u, -u) == doctest::Approx(2.0).epsilon(1e-12));
  MeshProgram p = make_program(make_topology(2, Layout::Rectangular));
  p.settings[0] = {1.1, 0.4};
  const double eps = matrix_error(mesh_unitary(p, ErrorMap{{0.02, 0.0}}), mesh_unitary(p));
  CHECK(eps == doctest::Approx(0.019999666668334436).epsilon(1e-12));
  CHECK_THROWS_AS(matrix_error(u, CMatrix::Identity(4, 4)), std::invalid_argument);

  // metric on random triples
  for (std::uint64_t s = 0; s < 50; ++s) {
    const CMatrix a = haar_random_unitary(4, 3 * s), b = haar_random_unitary(4, 3 * s + 1),
                  c = haar_random_unitary(4, 3 * s + 2);
    CHECK(matrix_error(a, b) == doctest::Approx(matrix_error(b, a)).epsilon(1e-14));
    CHECK(matrix_error(a, c) <= matrix_error(a, b) + matrix_error(b, c) + 1e-14);
  }
}

TEST_CASE("haar sampling") {
  const CMatrix one = haar_random_unitary(1, 5);
  CHECK(std::abs(std::abs(one(0, 0)) - 1.0) < 1e-15);
  CHECK(haar_random_unitary(6, 42) == haar_random_unitary(6, 42));
  CHECK(haar_random_unitary(6, 42) != haar_random_unitary(6, 43));
  CHECK(is_unitary(haar_random_unitary(32, 1), 1e-12));
  // |U_00|² of a Haar N×N matrix is Beta(1, N−1): mean 1/N, also after a fixed rotation.
  const int n = 4, trials = 20000;
  const CMatrix V = haar_random_unitary(n, 999);
  double m1 = 0, m2 = 0;
  for (int i = 0; i < trials; ++i) {
    const CMatrix u = haar_random_unitary(n, 1000 + i);
    m1 += std::norm(u(0, 0));
    m2 += std::norm((V * u)(0, 0));
  }
  CHECK(m1 / trials == doctest::Approx(0.25).epsilon(0.03));
  CHECK(m2 / trials == doctest::Approx(0.25).epsilon(0.03));
}

TEST_CASE("global phase comparator") {
  const CMatrix u = haar_random_unitary(3, 8);
  CHECK(equal_up_to_global_phase(u * std::polar(1.0, 1.234), u, 1e-12));
  CHECK_FALSE(equal_up_to_global_phase(u, haar_random_unitary(3, 9), 1e-3));
}

TEST_CASE("angle wrapping") {
  CHECK(wrap_2pi(-0.1) == doctest::Approx(2 * kPi - 0.1));
  CHECK(wrap_2pi(2 * kPi) == 0.0);
  CHECK(wrap_pi(kPi) == doctest::Approx(kPi));
  CHECK(wrap_pi(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_pi(3 * kPi / 2) == doctest::Approx(-kPi / 2));
}
