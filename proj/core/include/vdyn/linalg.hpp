#pragma once

#include <cstddef>
#include <vector>

namespace vdyn {

// Symmetric eigendecomposition by cyclic Jacobi rotations.
//
// Input is symmetrized as (A + A^T)/2 before sweeping. Sweeps run until the
// off-diagonal Frobenius norm drops below 1e-12 * ||A||_F (hard cap 100
// sweeps, which dense symmetric systems of the sizes used here never reach).
// Eigenvalues are returned ascending; ties keep a stable order. Each
// eigenvector's sign is fixed so its first component with |u| > 1e-9 is
// positive, which makes the factorization reproducible bit for bit.
struct SymEig {
  std::vector<double> lambda;  // m, ascending
  std::vector<double> U;       // m*m row-major, column j is the j-th eigenvector
};

SymEig jacobi_sym_eig(const std::vector<double>& a, std::size_t m);

// Row-major helpers for plain (non-tape) code paths.
std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                            std::size_t n, std::size_t k, std::size_t m);
std::vector<double> mat_vec(const std::vector<double>& a, const std::vector<double>& x,
                            std::size_t n, std::size_t m);
std::vector<double> mat_transpose(const std::vector<double>& a, std::size_t n, std::size_t m);
double frobenius_norm(const std::vector<double>& a);

}  // namespace vdyn
