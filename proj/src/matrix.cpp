#include "carnot/matrix.hpp"

#include <Eigen/SVD>

namespace carnot {

namespace {

Eigen::MatrixXd to_eigen(const Matrix<double>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

}  // namespace

std::vector<double> singular_values(const Matrix<double>& m) {
  if (m.rows() == 0 || m.cols() == 0) return {};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

std::size_t numeric_rank(const Matrix<double>& m, double tol) {
  const auto s = singular_values(m);
  if (s.empty()) return 0;
  const double thr = tol * std::max(1.0, s.front());
  std::size_t r = 0;
  for (double x : s) r += x > thr;
  return r;
}

std::vector<Vec<double>> smallest_singular_vectors(const Matrix<double>& m, std::size_t k) {
  const std::size_t n = m.cols();
  if (k > n) throw validation_error("asked for more singular vectors than columns");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m), Eigen::ComputeFullV);
  const auto& V = svd.matrixV();
  std::vector<Vec<double>> out;
  for (std::size_t j = n - k; j < n; ++j) {
    Vec<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = V(i, j);
    out.push_back(v);
  }
  return out;
}

std::vector<Vec<double>> numeric_nullspace(const Matrix<double>& m, double tol) {
  const std::size_t n = m.cols();
  if (m.rows() == 0) {
    std::vector<Vec<double>> out;
    for (std::size_t i = 0; i < n; ++i) {
      Vec<double> e(n, 0.0);
      e[i] = 1.0;
      out.push_back(e);
    }
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m), Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double thr = tol * std::max(1.0, s.size() ? s(0) : 0.0);
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) r += s(i) > thr;
  std::vector<Vec<double>> out;
  const auto& V = svd.matrixV();
  for (std::size_t j = r; j < n; ++j) {
    Vec<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = V(i, j);
    out.push_back(v);
  }
  return out;
}

}  // namespace carnot
