#include <cmath>
#include <vector>

#include "doctest.h"
#include "vdyn/errors.hpp"
#include "vdyn/ode.hpp"
#include "vdyn/rng.hpp"

using namespace vdyn;

namespace {

std::vector<double> random_symmetric(std::size_t m, Rng& rng, double scale) {
  std::vector<double> a(m * m);
  for (std::size_t i = 0; i < m; i++) {
    for (std::size_t j = i; j < m; j++) {
      const double v = scale * rng.uniform();
      a[i * m + j] = v;
      a[j * m + i] = v;
    }
  }
  return a;
}

}  // namespace

TEST_CASE("closed form matches the RK4 oracle on random systems") {
  Rng rng(11);
  for (int trial = 0; trial < 40; trial++) {
    const std::size_t m = 1 + rng.uniform_int(6);
    const std::vector<double> a = random_symmetric(m, rng, 2.0 / static_cast<double>(m));
    std::vector<double> n0(m);
    for (auto& v : n0) v = 0.2 + rng.uniform();
    const double t = 5.0 * rng.uniform();

    EigenSystem eig = decompose_sym(a, m);
    const std::vector<double> closed = solve_occurrence(eig, n0, t);
    const std::vector<double> stepped = rk4_linear_ode(a, m, n0, t, 4000);
    for (std::size_t i = 0; i < m; i++) {
      const double rel = std::abs(closed[i] - stepped[i]) /
                         std::max(std::abs(stepped[i]), 1e-12);
      CHECK(rel <= 1e-6);
    }
  }
}

TEST_CASE("scalar system is a plain exponential") {
  EigenSystem eig = decompose_sym({0.7}, 1);
  const std::vector<double> n = solve_occurrence(eig, {2.0}, 3.0);
  CHECK(n[0] == doctest::Approx(2.0 * std::exp(2.1)).epsilon(1e-10));
}

TEST_CASE("swap matrix gives the cosh/sinh solution") {
  // A = [[0,1],[1,0]]: n(t) = (n0+n1)/2 e^t [1,1] + (n0-n1)/2 e^-t [1,-1]
  EigenSystem eig = decompose_sym({0.0, 1.0, 1.0, 0.0}, 2);
  const double n0 = 1.5, n1 = 0.25, t = 1.7;
  const std::vector<double> n = solve_occurrence(eig, {n0, n1}, t);
  const double expect0 = n0 * std::cosh(t) + n1 * std::sinh(t);
  const double expect1 = n0 * std::sinh(t) + n1 * std::cosh(t);
  CHECK(n[0] == doctest::Approx(expect0).epsilon(1e-10));
  CHECK(n[1] == doctest::Approx(expect1).epsilon(1e-10));
}

TEST_CASE("t=0 returns the boundary condition") {
  Rng rng(12);
  const std::size_t m = 4;
  EigenSystem eig = decompose_sym(random_symmetric(m, rng, 1.0), m);
  std::vector<double> n0 = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> n = solve_occurrence(eig, n0, 0.0);
  for (std::size_t i = 0; i < m; i++) CHECK(n[i] == doctest::Approx(n0[i]).epsilon(1e-12));
}

TEST_CASE("rescaled solution is the raw solution scaled by exp(-lambda_max t)") {
  Rng rng(13);
  const std::size_t m = 5;
  EigenSystem eig = decompose_sym(random_symmetric(m, rng, 0.8), m);
  std::vector<double> n0(m, 1.0);
  const double t = 2.3;
  const std::vector<double> raw = solve_occurrence(eig, n0, t, false);
  const std::vector<double> scaled = solve_occurrence(eig, n0, t, true);
  const double f = std::exp(-max_lambda(eig) * t);
  for (std::size_t i = 0; i < m; i++) {
    CHECK(scaled[i] == doctest::Approx(raw[i] * f).epsilon(1e-9));
  }
}

TEST_CASE("rescaling survives horizons that overflow the raw solution") {
  // lambda_max ~ 2, t = 1000: e^2000 overflows; the shifted path stays finite.
  EigenSystem eig = decompose_sym({1.0, 1.0, 1.0, 1.0}, 2);
  CHECK_THROWS_AS(solve_occurrence(eig, {1.0, 1.0}, 1000.0, false), numeric_error);
  const std::vector<double> n = solve_occurrence(eig, {1.0, 1.0}, 1000.0, true);
  CHECK(std::isfinite(n[0]));
  CHECK(n[0] > 0.0);
}

TEST_CASE("occurrences are floored at the positive clamp") {
  // A = diag(-1, 1), n0 ~ e1 only: first component decays to ~e^-2000.
  EigenSystem eig = decompose_sym({-1.0, 0.0, 0.0, 1.0}, 2);
  const std::vector<double> n = solve_occurrence(eig, {1.0, 1.0}, 1000.0, true);
  CHECK(n[0] >= 1e-300);
}

TEST_CASE("spectrum truncation keeps the largest modes") {
  Rng rng(14);
  const std::size_t m = 6;
  const std::vector<double> a = random_symmetric(m, rng, 1.0);
  EigenSystem eig = decompose_sym(a, m);
  EigenSystem full = truncate_spectrum(eig, m);
  std::vector<double> n0(m, 1.0);
  const std::vector<double> n_eig = solve_occurrence(eig, n0, 1.5);
  const std::vector<double> n_full = solve_occurrence(full, n0, 1.5);
  for (std::size_t i = 0; i < m; i++) CHECK(n_eig[i] == n_full[i]);

  EigenSystem top2 = truncate_spectrum(eig, 2);
  CHECK(top2.r == 2);
  CHECK(top2.lambda[0] == eig.lambda[m - 2]);
  CHECK(top2.lambda[1] == eig.lambda[m - 1]);

  // As t grows the top mode dominates, so even k=1 converges to the truth in
  // direction and the relative error of the dominant component vanishes.
  EigenSystem top1 = truncate_spectrum(eig, 1);
  const double t_big = 40.0;
  const std::vector<double> exact = solve_occurrence(eig, n0, t_big, true);
  const std::vector<double> approx = solve_occurrence(top1, n0, t_big, true);
  std::size_t imax = 0;
  for (std::size_t i = 1; i < m; i++) {
    if (exact[i] > exact[imax]) imax = i;
  }
  CHECK(approx[imax] ==
        doctest::Approx(exact[imax]).epsilon(1e-6));
}
