#include "doctest.h"

#include "pobilin/design.hpp"
#include "pobilin/lqg.hpp"

#include <cmath>

using namespace pobilin;

namespace {

double logdet_of(const std::vector<Vec>& pts, const std::vector<int>& idx, const std::vector<double>& w) {
  Mat M = Mat::Zero(pts[0].size(), pts[0].size());
  for (size_t k = 0; k < idx.size(); ++k) M += w[k] * pts[idx[k]] * pts[idx[k]].transpose();
  double det = M.determinant();
  return det > 0.0 ? std::log(det) : -INFINITY;
}

double design_logdet(const DesignResult& r) { return std::log(r.info_matrix.determinant()); }

}  // namespace

TEST_CASE("standard basis gives the uniform design") {
  for (int d = 1; d <= 6; ++d) {
    DesignResult r = g_optimal_design(Mat(Mat::Identity(d, d)));
    CHECK(static_cast<int>(r.support.size()) == d);
    for (int i = 0; i < d; ++i) CHECK(r.weights[i] == doctest::Approx(1.0 / d).epsilon(1e-12));
    CHECK(r.max_leverage == doctest::Approx(d).epsilon(1e-12));
  }
}

TEST_CASE("duplicates do not change the design") {
  Rng rng(3);
  std::vector<Vec> pts, dup;
  for (int i = 0; i < 9; ++i) {
    Vec x(3);
    for (int k = 0; k < 3; ++k) x[k] = rng.normal();
    pts.push_back(x);
  }
  for (int rep = 0; rep < 3; ++rep)
    for (const auto& x : pts) dup.push_back(x);
  DesignResult a = g_optimal_design(pts), b = g_optimal_design(dup);
  CHECK(a.support == b.support);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.max_leverage == b.max_leverage);
}

TEST_CASE("seven points in the plane against a weight grid") {
  Rng rng(7);
  std::vector<Vec> pts;
  for (int i = 0; i < 7; ++i) {
    Vec x(2);
    x << rng.normal(), rng.normal();
    pts.push_back(x);
  }
  DesignOptions opt;
  DesignResult r = g_optimal_design(pts, opt);
  CHECK(r.max_leverage <= 2.0 * (1.0 + 1e-3));
  CHECK(r.support.size() <= 3);
  CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));

  // an optimum sits on at most three points; grid every triple at resolution 1e-2
  double best = -INFINITY;
  for (int i = 0; i < 7; ++i)
    for (int j = i + 1; j < 7; ++j)
      for (int k = j + 1; k < 7; ++k)
        for (int a = 0; a <= 100; ++a)
          for (int b = 0; a + b <= 100; ++b)
            best = std::max(best, logdet_of(pts, {i, j, k}, {a / 100.0, b / 100.0, (100 - a - b) / 100.0}));
  double ld = design_logdet(r);
  // leverage <= d(1 + tol) bounds the log det gap by d * tol
  CHECK(best <= ld + 2.0 * opt.tol + 1e-12);
  CHECK(ld - best <= 1e-2);
}

TEST_CASE("design certificate on random clouds") {
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    int d = 2 + seed % 4, n = 10 + 5 * seed;
    Mat X(d, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < d; ++i) X(i, j) = rng.normal();
    DesignResult r = g_optimal_design(X);
    CHECK(static_cast<int>(r.support.size()) <= d * (d + 1) / 2);
    CHECK(leverages(r.info_matrix, X).maxCoeff() <= d * (1.0 + 1e-3));
    CHECK(r.weights.minCoeff() > 0.0);
  }
}

TEST_CASE("design errors") {
  Mat flat(2, 3);
  flat << 1, 2, 3, 2, 4, 6;
  CHECK_THROWS_AS(g_optimal_design(flat), ConfigError);
  CHECK_THROWS_AS(g_optimal_design(std::vector<Vec>{}), ConfigError);
  Rng rng(5);
  Mat X(4, 40);
  for (int j = 0; j < 40; ++j)
    for (int i = 0; i < 4; ++i) X(i, j) = rng.normal();
  DesignOptions opt;
  opt.max_iters = 1;
  opt.tol = 1e-9;
  try {
    g_optimal_design(X, opt);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.final_value > 4.0);
  }
}

TEST_CASE("kappa layout") {
  CHECK(kappa(Vec::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
  Vec e = kappa(Vec::Unit(2, 0));
  Vec want(6);
  want << 1, 0, 1, 0, 0, 0;
  CHECK(e == want);
  Vec a(2);
  a << 2.0, -3.0;
  Vec k = kappa(a);
  CHECK(k[3] == -6.0);
  CHECK(k[4] == -6.0);
  CHECK(k[5] == 9.0);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    Vec x(3);
    for (int i = 0; i < 3; ++i) x[i] = rng.normal();
    double n2 = x.squaredNorm();
    CHECK(kappa(x).squaredNorm() == doctest::Approx(n2 + n2 * n2).epsilon(1e-12));
  }
}

TEST_CASE("alpha coefficients") {
  for (int da = 1; da <= 2; ++da) {
    std::vector<Vec> cand = lqg_design_candidates(da, 2.0, 60, 17);
    AlphaDesign ad = make_alpha_design(cand);
    const int dk = da + da * da;
    CHECK(alpha_coeffs(ad, Vec::Zero(da)).cwiseAbs().maxCoeff() <= 1e-14);
    Rng rng(23);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      Vec a(da);
      for (int i = 0; i < da; ++i) a[i] = rng.normal();
      if (a.norm() > 2.0) a *= 2.0 / a.norm();
      Vec al = alpha_coeffs(ad, a);
      worst = std::max(worst, alpha_reconstruction_error(ad, a, al));
      // mixing coefficients rebuild kappa from the raw atoms
      Vec rebuilt = Vec::Zero(dk);
      Vec c = mixing_coeffs(ad, a);
      for (size_t i = 0; i < ad.atoms.size(); ++i) rebuilt += c[i] * kappa(ad.atoms[i]);
      CHECK((rebuilt - kappa(a)).norm() <= 1e-8);
    }
    CHECK(worst <= 1e-8);
    // norm bounds on the candidate set itself
    for (const Vec& a : cand) {
      Vec al = alpha_coeffs(ad, a);
      CHECK(al.norm() <= std::sqrt(static_cast<double>(dk)) + 1e-9);
      for (long i = 0; i < al.size(); ++i) CHECK(std::abs(al[i]) / std::sqrt(ad.rho[i]) <= dk + 1e-9);
    }
  }
  // kappa(a) of a 2-d action is never spanned by atoms on one axis
  std::vector<Vec> axis;
  for (double x : {-1.0, -0.5, 0.5, 1.0}) axis.push_back((Vec(2) << x, 0.0).finished());
  AlphaDesign ad = make_alpha_design(axis);
  CHECK_THROWS_AS(alpha_coeffs(ad, (Vec(2) << 0.0, 1.0).finished()), ConfigError);
  CHECK_THROWS_AS(alpha_coeffs(ad, Vec::Zero(3)), ConfigError);
}
