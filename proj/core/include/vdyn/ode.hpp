#pragma once

#include <cstddef>
#include <vector>

#include "vdyn/linalg.hpp"

namespace vdyn {

// Eigendecomposition of a rate matrix, possibly truncated to the top r modes.
// Solves dN/dt = A N in closed form: N(t) = U diag(exp(lambda t)) Uinv N(0).
struct EigenSystem {
  std::size_t m = 0;           // ambient dimension
  std::size_t r = 0;           // retained modes (r == m unless truncated)
  std::vector<double> lambda;  // r entries, ascending
  std::vector<double> U;       // m x r, row-major
  std::vector<double> Uinv;    // r x m, row-major
};

// Symmetric input path: Uinv is U^T.
EigenSystem decompose_sym(const std::vector<double>& a, std::size_t m);

double max_lambda(const EigenSystem& eig);

// N(t) with the exponent shifted mode-wise by `shift` (exp((lambda-shift) t)),
// entries floored at 1e-300. Shifting by max_lambda keeps every exponential
// in [0,1] regardless of t; shift=0 is the raw solution.
std::vector<double> solve_occurrence_shifted(const EigenSystem& eig,
                                             const std::vector<double>& n0, double t,
                                             double shift);

// rescale=true applies shift = max_lambda(eig).
std::vector<double> solve_occurrence(const EigenSystem& eig, const std::vector<double>& n0,
                                     double t, bool rescale = false);

// Keep the k largest-eigenvalue modes.
EigenSystem truncate_spectrum(const EigenSystem& eig, std::size_t k);

// Classical fixed-step RK4 for dN/dt = A N; the independent oracle the
// closed-form path is tested against.
std::vector<double> rk4_linear_ode(const std::vector<double>& a, std::size_t m,
                                   std::vector<double> n0, double t, int steps);

}  // namespace vdyn
