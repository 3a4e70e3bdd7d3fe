#include "pobilin/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace pobilin {

Mat pinv(const Mat& A, double rel_tol) {
  if (A.size() == 0) return Mat::Zero(A.cols(), A.rows());
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  double cut = rel_tol * (s.size() ? s[0] : 0.0);
  Vec inv = Vec::Zero(s.size());
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > cut) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

int numerical_rank(const Mat& A, double rel_tol) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(A);
  const Vec& s = svd.singularValues();
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > rel_tol * s[0]) ++r;
  return r;
}

double sigma_min(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  const Vec& s = svd.singularValues();
  return s.size() ? s[s.size() - 1] : 0.0;
}

double l1_operator_norm(const Mat& A) {
  if (A.size() == 0) return 0.0;
  return A.cwiseAbs().colwise().sum().maxCoeff();
}

Mat column_span_basis(const Mat& A, double rel_tol) {
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU);
  int r = 0;
  const Vec& s = svd.singularValues();
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > rel_tol * s[0]) ++r;
  return svd.matrixU().leftCols(r);
}

int thread_count() {
  const char* env = std::getenv("POBILIN_THREADS");
  int n = 1;
  if (env) n = std::max(1, std::atoi(env));
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw > 0) n = std::min(n, hw);
  return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  int k = std::min(thread_count(), n);
  if (k <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < k; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace pobilin
