#pragma once

#include <vector>

#include <Eigen/Dense>

namespace torusdyn {

// Torus dimensions handled by the library. Small fixed capacity keeps every
// point/matrix on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using IntMat = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

inline Mat to_real(const IntMat& m) { return m.cast<double>(); }

// Smallest singular value, i.e. the conorm 1/|A^{-1}|.
double conorm(const Mat& a);
double operator_norm(const Mat& a);

// Eigenvalue moduli sorted in descending order.
std::vector<double> eigenvalue_moduli(const Mat& a);

// True when `a` has a non-real conjugate eigenvalue pair.
bool has_complex_pair(const Mat& a, double tol = 1e-12);

long long integer_determinant(const IntMat& m);
IntMat integer_adjugate(const IntMat& m);

}  // namespace torusdyn
