#pragma once

#include "pobilin/common.hpp"

#include <vector>

namespace pobilin {

struct DesignResult {
  std::vector<int> support;  // indices into the candidate list passed in
  Vec weights;               // over support
  Mat info_matrix;
  double max_leverage = 0.0;
  int dim = 0;
  int iterations = 0;
};

struct DesignOptions {
  double tol = 1e-3;
  int max_iters = 200000;
  double weight_floor = 1e-6;
};

// Frank-Wolfe with away steps on log det; candidates are the columns of X.
DesignResult g_optimal_design(const Mat& X, const DesignOptions& opt = {});
DesignResult g_optimal_design(const std::vector<Vec>& candidates, const DesignOptions& opt = {});
// x^T (info)^{-1} x for every column of X.
Vec leverages(const Mat& info, const Mat& X);

// [a; row-major vec(a a^T)]
Vec kappa(const Vec& a);

struct AlphaDesign {
  int d_a = 0;
  std::vector<Vec> atoms;  // support actions a^i
  Vec rho;
  Mat P;                   // orthonormal basis of span{kappa(candidates)}
  Mat K;                   // columns rho_i^{1/2} kappa(a^i)
  Mat Kr_gram_inv;         // (P^T K K^T P)^{-1}
  DesignResult design;     // in reduced coordinates P^T kappa
};

AlphaDesign make_alpha_design(const std::vector<Vec>& actions, const DesignOptions& opt = {});
// alpha(a) = K^T (K K^T)^+ kappa(a); throws ConfigError if kappa(a) leaves the span.
Vec alpha_coeffs(const AlphaDesign& ad, const Vec& a);
// Coefficients c with kappa(a) = sum_i c_i kappa(a^i): c_i = rho_i^{1/2} alpha_i.
Vec mixing_coeffs(const AlphaDesign& ad, const Vec& a);
double alpha_reconstruction_error(const AlphaDesign& ad, const Vec& a, const Vec& alpha);

}  // namespace pobilin
