#include "torusdyn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace torusdyn {

double conorm(const Mat& a) {
  if (a.rows() == 1) return std::abs(a(0, 0));
  Eigen::JacobiSVD<Mat> svd{a};
  return svd.singularValues().minCoeff();
}

double operator_norm(const Mat& a) {
  if (a.rows() == 1) return std::abs(a(0, 0));
  Eigen::JacobiSVD<Mat> svd{a};
  return svd.singularValues().maxCoeff();
}

std::vector<double> eigenvalue_moduli(const Mat& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(a), false};
  std::vector<double> out;
  for (int i = 0; i < a.rows(); ++i) out.push_back(std::abs(es.eigenvalues()[i]));
  std::sort(out.rbegin(), out.rend());
  return out;
}

bool has_complex_pair(const Mat& a, double tol) {
  Eigen::EigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(a), false};
  for (int i = 0; i < a.rows(); ++i) {
    const auto ev = es.eigenvalues()[i];
    if (std::abs(ev.imag()) > tol * std::max(1.0, std::abs(ev))) return true;
  }
  return false;
}

namespace {

IntMat minor_of(const IntMat& m, int row, int col) {
  const int n = static_cast<int>(m.rows());
  IntMat out(n - 1, n - 1);
  for (int i = 0, oi = 0; i < n; ++i) {
    if (i == row) continue;
    for (int j = 0, oj = 0; j < n; ++j) {
      if (j == col) continue;
      out(oi, oj++) = m(i, j);
    }
    ++oi;
  }
  return out;
}

}  // namespace

// Cofactor expansion; exact for the small integer matrices used here.
long long integer_determinant(const IntMat& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 1) return m(0, 0);
  if (n == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  long long det = 0;
  for (int j = 0; j < n; ++j) {
    const long long sign = (j % 2 == 0) ? 1 : -1;
    det += sign * m(0, j) * integer_determinant(minor_of(m, 0, j));
  }
  return det;
}

IntMat integer_adjugate(const IntMat& m) {
  const int n = static_cast<int>(m.rows());
  IntMat adj(n, n);
  if (n == 1) {
    adj(0, 0) = 1;
    return adj;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const long long sign = ((i + j) % 2 == 0) ? 1 : -1;
      adj(j, i) = sign * integer_determinant(minor_of(m, i, j));
    }
  return adj;
}

}  // namespace torusdyn
