#include "pobilin/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pobilin {

namespace {

Mat info_of(const Mat& X, const Vec& w) {
  Mat M = Mat::Zero(X.rows(), X.rows());
  for (long j = 0; j < X.cols(); ++j)
    if (w[j] > 0.0) M.noalias() += w[j] * X.col(j) * X.col(j).transpose();
  return M;
}

Vec vec_sym(const Vec& x) {
  const long d = x.size();
  Vec v(d * (d + 1) / 2);
  long k = 0;
  for (long i = 0; i < d; ++i)
    for (long j = i; j < d; ++j) v[k++] = x[i] * x[j];
  return v;
}

// Moves weight along null directions of w -> sum w x x^T until the support fits.
void caratheodory_reduce(const Mat& X, Vec& w) {
  const long p = X.rows() * (X.rows() + 1) / 2;
  for (;;) {
    std::vector<long> sup;
    for (long j = 0; j < w.size(); ++j)
      if (w[j] > 0.0) sup.push_back(j);
    if (static_cast<long>(sup.size()) <= p) return;
    Mat V(p + 1, sup.size());
    for (size_t k = 0; k < sup.size(); ++k) {
      V.col(k).head(p) = vec_sym(X.col(sup[k]));
      V(p, k) = 1.0;
    }
    Eigen::FullPivLU<Mat> lu(V);
    Mat N = lu.kernel();
    Vec v;
    if (N.cols() > 0 && N.col(0).norm() > 0.0) {
      v = N.col(0);
    } else {
      // Only the moment equations: rescale afterwards.
      Eigen::FullPivLU<Mat> lu2(V.topRows(p));
      Mat N2 = lu2.kernel();
      if (N2.cols() == 0 || N2.col(0).norm() == 0.0) return;
      v = N2.col(0);
    }
    if (v.maxCoeff() <= 0.0) v = -v;
    double step = std::numeric_limits<double>::infinity();
    long hit = -1;
    for (size_t k = 0; k < sup.size(); ++k)
      if (v[k] > 1e-14 && w[sup[k]] / v[k] < step) {
        step = w[sup[k]] / v[k];
        hit = static_cast<long>(k);
      }
    if (hit < 0) return;
    for (size_t k = 0; k < sup.size(); ++k) w[sup[k]] = std::max(0.0, w[sup[k]] - step * v[k]);
    w[sup[hit]] = 0.0;
    w /= w.sum();
  }
}

}  // namespace

Vec leverages(const Mat& info, const Mat& X) {
  Eigen::LLT<Mat> llt(info);
  if (llt.info() != Eigen::Success) {
    Mat ip = pinv(info, 1e-13);
    return (X.transpose() * ip * X).diagonal();
  }
  Mat L = llt.matrixL().solve(X);
  return L.colwise().squaredNorm().transpose();
}

DesignResult g_optimal_design(const std::vector<Vec>& candidates, const DesignOptions& opt) {
  if (candidates.empty()) throw ConfigError("design: empty candidate set");
  Mat X(candidates[0].size(), candidates.size());
  for (size_t j = 0; j < candidates.size(); ++j) {
    if (candidates[j].size() != X.rows()) throw ConfigError("design: candidates differ in dimension");
    X.col(j) = candidates[j];
  }
  return g_optimal_design(X, opt);
}

DesignResult g_optimal_design(const Mat& Xall, const DesignOptions& opt) {
  const int d = static_cast<int>(Xall.rows());
  if (d < 1 || Xall.cols() < 1) throw ConfigError("design: empty candidate set");
  if (numerical_rank(Xall, 1e-10) < d) throw ConfigError("design: candidates do not span the ambient space (rank error)");

  // Deduplicate, keeping the first index of every distinct vector.
  std::map<std::vector<double>, int> seen;
  std::vector<int> orig;
  for (long j = 0; j < Xall.cols(); ++j) {
    std::vector<double> key(Xall.col(j).data(), Xall.col(j).data() + d);
    if (seen.emplace(key, static_cast<int>(j)).second) orig.push_back(static_cast<int>(j));
  }
  const long n = static_cast<long>(orig.size());
  Mat X(d, n);
  for (long k = 0; k < n; ++k) X.col(k) = Xall.col(orig[k]);

  Vec w = Vec::Constant(n, 1.0 / n);
  const double target = d * (1.0 + opt.tol);
  const double inner = d * (1.0 + 0.25 * opt.tol);
  int it = 0;
  double lmax = 0.0;
  bool pruned = false;
  for (;;) {
    Mat M = info_of(X, w);
    Vec lev = leverages(M, X);
    long kmax = 0;
    lmax = lev.maxCoeff(&kmax);
    if (lmax <= (pruned ? target : inner)) {
      if (pruned) break;
      for (long j = 0; j < n; ++j)
        if (w[j] < opt.weight_floor) w[j] = 0.0;
      w /= w.sum();
      caratheodory_reduce(X, w);
      pruned = true;
      continue;
    }
    pruned = false;
    if (++it > opt.max_iters) throw ConvergenceError("design: iteration cap reached", lmax);
    long kmin = -1;
    double lmin = std::numeric_limits<double>::infinity();
    for (long j = 0; j < n; ++j)
      if (w[j] > 0.0 && lev[j] < lmin) {
        lmin = lev[j];
        kmin = j;
      }
    if (kmin >= 0 && d - lmin > lmax - d && w[kmin] < 1.0) {
      double lo = -w[kmin] / (1.0 - w[kmin]);
      double lam = lmin > 1.0 ? (lmin - d) / (d * (lmin - 1.0)) : lo;
      lam = std::max(lam, lo);
      w *= (1.0 - lam);
      w[kmin] += lam;
      if (lam == lo) w[kmin] = 0.0;
    } else {
      double lam = (lmax - d) / (d * (lmax - 1.0));
      w *= (1.0 - lam);
      w[kmax] += lam;
    }
    for (long j = 0; j < n; ++j)
      if (w[j] < 0.0) w[j] = 0.0;
    w /= w.sum();
  }

  DesignResult r;
  r.dim = d;
  r.iterations = it;
  std::vector<double> ws;
  for (long k = 0; k < n; ++k)
    if (w[k] > 0.0) {
      r.support.push_back(orig[k]);
      ws.push_back(w[k]);
    }
  r.weights = Eigen::Map<Vec>(ws.data(), ws.size());
  r.info_matrix = info_of(X, w);
  r.max_leverage = leverages(r.info_matrix, Xall).maxCoeff();
  return r;
}

Vec kappa(const Vec& a) {
  const long d = a.size();
  Vec k(d + d * d);
  k.head(d) = a;
  for (long i = 0; i < d; ++i)
    for (long j = 0; j < d; ++j) k[d + i * d + j] = a[i] * a[j];
  return k;
}

AlphaDesign make_alpha_design(const std::vector<Vec>& actions, const DesignOptions& opt) {
  if (actions.empty()) throw ConfigError("alpha design: no candidate actions");
  const int da = static_cast<int>(actions[0].size());
  Mat Kall(da + da * da, actions.size());
  for (size_t j = 0; j < actions.size(); ++j) {
    if (actions[j].size() != da) throw ConfigError("alpha design: actions differ in dimension");
    Kall.col(j) = kappa(actions[j]);
  }
  AlphaDesign ad;
  ad.d_a = da;
  ad.P = column_span_basis(Kall, 1e-10);
  ad.design = g_optimal_design(Mat(ad.P.transpose() * Kall), opt);
  ad.rho = ad.design.weights;
  ad.K.resize(Kall.rows(), ad.design.support.size());
  for (size_t i = 0; i < ad.design.support.size(); ++i) {
    ad.atoms.push_back(actions[ad.design.support[i]]);
    ad.K.col(i) = std::sqrt(ad.rho[i]) * Kall.col(ad.design.support[i]);
  }
  Mat Kr = ad.P.transpose() * ad.K;
  ad.Kr_gram_inv = (Kr * Kr.transpose()).inverse();
  return ad;
}

Vec alpha_coeffs(const AlphaDesign& ad, const Vec& a) {
  if (a.size() != ad.d_a) throw ConfigError("alpha: action has wrong dimension");
  Vec k = kappa(a);
  Vec y = ad.P.transpose() * k;
  if ((k - ad.P * y).norm() > 1e-8 * std::max(1.0, k.norm()))
    throw ConfigError("alpha: kappa(a) is outside the span of the design atoms");
  Mat Kr = ad.P.transpose() * ad.K;
  return Kr.transpose() * (ad.Kr_gram_inv * y);
}

Vec mixing_coeffs(const AlphaDesign& ad, const Vec& a) {
  return alpha_coeffs(ad, a).cwiseProduct(ad.rho.cwiseSqrt());
}

double alpha_reconstruction_error(const AlphaDesign& ad, const Vec& a, const Vec& alpha) {
  return (ad.K * alpha - kappa(a)).norm();
}

}  // namespace pobilin
