#include "vdyn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vdyn {

std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                            std::size_t n, std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) c[i * m + j] += aip * b[p * m + j];
    }
  return c;
}

std::vector<double> mat_vec(const std::vector<double>& a, const std::vector<double>& x,
                            std::size_t n, std::size_t m) {
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a[i * m + j] * x[j];
    y[i] = s;
  }
  return y;
}

std::vector<double> mat_transpose(const std::vector<double>& a, std::size_t n, std::size_t m) {
  std::vector<double> t(m * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t[j * n + i] = a[i * m + j];
  return t;
}

double frobenius_norm(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

SymEig jacobi_sym_eig(const std::vector<double>& a_in, std::size_t m) {
  if (a_in.size() != m * m)
    throw std::invalid_argument("jacobi_sym_eig: matrix size does not match m");

  std::vector<double> a(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      a[i * m + j] = 0.5 * (a_in[i * m + j] + a_in[j * m + i]);

  std::vector<double> u(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) u[i * m + i] = 1.0;

  const double norm = frobenius_norm(a);
  const double tol = 1e-12 * (norm > 0.0 ? norm : 1.0);

  auto offdiag_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) s += 2.0 * a[i * m + j] * a[i * m + j];
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 100 && offdiag_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        const double apq = a[p * m + q];
        if (std::abs(apq) <= 1e-300) continue;
        const double app = a[p * m + p];
        const double aqq = a[q * m + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t k = 0; k < m; ++k) {
          const double akp = a[k * m + p];
          const double akq = a[k * m + q];
          a[k * m + p] = c * akp - s * akq;
          a[k * m + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < m; ++k) {
          const double apk = a[p * m + k];
          const double aqk = a[q * m + k];
          a[p * m + k] = c * apk - s * aqk;
          a[q * m + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < m; ++k) {
          const double ukp = u[k * m + p];
          const double ukq = u[k * m + q];
          u[k * m + p] = c * ukp - s * ukq;
          u[k * m + q] = s * ukp + c * ukq;
        }
      }
    }
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i * m + i] < a[j * m + j];
  });

  SymEig out;
  out.lambda.resize(m);
  out.U.assign(m * m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t src = order[j];
    out.lambda[j] = a[src * m + src];
    double sign = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::abs(u[i * m + src]) > 1e-9) {
        sign = u[i * m + src] > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < m; ++i) out.U[i * m + j] = sign * u[i * m + src];
  }
  return out;
}

}  // namespace vdyn
