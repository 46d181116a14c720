#include "vdyn/ode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vdyn/errors.hpp"

namespace vdyn {

EigenSystem decompose_sym(const std::vector<double>& a, std::size_t m) {
  SymEig e = jacobi_sym_eig(a, m);
  EigenSystem out;
  out.m = m;
  out.r = m;
  out.lambda = std::move(e.lambda);
  out.Uinv = mat_transpose(e.U, m, m);
  out.U = std::move(e.U);
  return out;
}

double max_lambda(const EigenSystem& eig) {
  if (eig.lambda.empty()) throw std::invalid_argument("max_lambda: empty spectrum");
  return eig.lambda.back();
}

std::vector<double> solve_occurrence_shifted(const EigenSystem& eig,
                                             const std::vector<double>& n0, double t,
                                             double shift) {
  if (n0.size() != eig.m)
    throw std::invalid_argument("solve_occurrence: n0 size does not match system dimension");
  std::vector<double> c = mat_vec(eig.Uinv, n0, eig.r, eig.m);
  for (std::size_t j = 0; j < eig.r; ++j) c[j] *= std::exp((eig.lambda[j] - shift) * t);
  std::vector<double> n = mat_vec(eig.U, c, eig.m, eig.r);
  for (double& v : n) {
    if (!std::isfinite(v))
      throw numeric_error("solve_occurrence: non-finite occupancy (lambda*t too large; "
                          "enable rescaling)");
    if (v < 1e-300) v = 1e-300;
  }
  return n;
}

std::vector<double> solve_occurrence(const EigenSystem& eig, const std::vector<double>& n0,
                                     double t, bool rescale) {
  return solve_occurrence_shifted(eig, n0, t, rescale ? max_lambda(eig) : 0.0);
}

EigenSystem truncate_spectrum(const EigenSystem& eig, std::size_t k) {
  if (k == 0 || k > eig.r)
    throw std::invalid_argument("truncate_spectrum: k must be in [1, r]");
  EigenSystem out;
  out.m = eig.m;
  out.r = k;
  const std::size_t drop = eig.r - k;  // lambda ascending, keep the tail
  out.lambda.assign(eig.lambda.begin() + static_cast<std::ptrdiff_t>(drop), eig.lambda.end());
  out.U.resize(eig.m * k);
  for (std::size_t i = 0; i < eig.m; ++i)
    for (std::size_t j = 0; j < k; ++j) out.U[i * k + j] = eig.U[i * eig.r + drop + j];
  out.Uinv.resize(k * eig.m);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < eig.m; ++i)
      out.Uinv[j * eig.m + i] = eig.Uinv[(drop + j) * eig.m + i];
  return out;
}

std::vector<double> rk4_linear_ode(const std::vector<double>& a, std::size_t m,
                                   std::vector<double> n0, double t, int steps) {
  if (a.size() != m * m)
    throw std::invalid_argument("rk4_linear_ode: matrix size does not match m");
  if (n0.size() != m)
    throw std::invalid_argument("rk4_linear_ode: n0 size does not match m");
  if (steps <= 0) throw std::invalid_argument("rk4_linear_ode: steps must be positive");

  const double h = t / steps;
  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  auto deriv = [&](const std::vector<double>& y, std::vector<double>& dy) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += a[i * m + j] * y[j];
      dy[i] = s;
    }
  };
  for (int step = 0; step < steps; ++step) {
    deriv(n0, k1);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = n0[i] + 0.5 * h * k1[i];
    deriv(tmp, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = n0[i] + 0.5 * h * k2[i];
    deriv(tmp, k3);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = n0[i] + h * k3[i];
    deriv(tmp, k4);
    for (std::size_t i = 0; i < m; ++i)
      n0[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return n0;
}

}  // namespace vdyn
