#include "doctest.h"
#include "lqg_sim.hpp"
#include "oracles.hpp"

#include "pobilin/lqg.hpp"

#include <cmath>

using namespace pobilin;

namespace {

LqgModel small_model(int H) {
  LqgModel m;
  m.A.resize(2, 2);
  m.A << 0.5, -0.3, 0.2, 0.4;
  m.B.resize(2, 1);
  m.B << 0.3, 0.1;
  m.C.resize(2, 2);
  m.C << 0.6, 0.1, 0.0, 0.5;
  m.Q = Mat::Identity(2, 2);
  m.R = Mat::Constant(1, 1, 0.5);
  m.Sigma_eps = 0.1 * Mat::Identity(2, 2);
  m.Sigma_tau = 0.05 * Mat::Identity(2, 2);
  m.horizon = H;
  m.validate();
  return m;
}

LinearPolicy small_policy(const LqgModel& m) {
  LinearPolicy pi = zero_linear_policy(m, 1);
  for (int h = 1; h <= m.horizon; ++h) {
    pi.U1[h - 1] << -0.2, 0.1 * h;
    if (h > 1) pi.U2[h - 1] << 0.1, 0.0, 0.2;
  }
  return pi;
}

}  // namespace

TEST_CASE("noise-free zero policy stays at the origin") {
  LqgModel m = small_model(4);
  m.Sigma_eps.setZero();
  m.Sigma_tau.setZero();
  m.Sigma_init = Mat::Zero(2, 2);
  Rng rng(1);
  LqgEpisode ep = lqg_simulate(m, zero_linear_policy(m, 1), rng);
  CHECK(ep.s.size() == 4);
  for (int h = 0; h < 4; ++h) {
    CHECK(ep.s[h].norm() == 0.0);
    CHECK(ep.o[h].norm() == 0.0);
    CHECK(ep.a[h].norm() == 0.0);
    CHECK(ep.r[h] == 0.0);
  }
  CHECK(ep.z[0].size() == 0);
  CHECK(ep.z[1].size() == 3);
}

TEST_CASE("rewards are never positive") {
  LqgModel m = small_model(5);
  LinearPolicy pi = small_policy(m);
  Rng rng(2);
  for (int i = 0; i < 2000; ++i)
    for (double r : lqg_simulate(m, pi, rng).r) CHECK(r <= 0.0);
}

TEST_CASE("state covariance recursion against simulation") {
  LqgModel m = small_model(4);
  LinearPolicy pi = small_policy(m);
  register_policy(m, pi);
  std::vector<Mat> S = lqg_state_covariances(m, pi);
  oracle::LqgSim sim(m, pi, 44);
  const int n = 100000;
  std::vector<std::vector<Vec>> xs(n);
  for (int i = 0; i < n; ++i) sim.run(1, Vec(0), sim.draw(sim.Li), &xs[i]);
  int bad = 0, cells = 0;
  for (int h = 1; h <= 4; ++h) {
    const long d = S[h - 1].rows();
    CHECK(d == xs[0][h - 1].size());
    for (long i = 0; i < d; ++i)
      for (long j = i; j < d; ++j) {
        std::vector<double> p(n);
        for (int k = 0; k < n; ++k) p[k] = xs[k][h - 1][i] * xs[k][h - 1][j];
        oracle::MeanSe st = oracle::mean_se(p);
        ++cells;
        if (std::abs(st.mean - S[h - 1](i, j)) > 3.0 * st.se) ++bad;
        CHECK(std::abs(st.mean - S[h - 1](i, j)) <= 4.5 * st.se);
      }
  }
  // 3 SE on the bulk, looser cap on each of the ~60 cells
  CHECK(bad <= cells / 20 + 1);
}

TEST_CASE("scalar value recursion in closed form") {
  LqgModel m;
  double a = 0.8, b = 0.5, c = 1.5, q = 2.0, r = 0.7, se = 0.3, st = 0.2, u = -0.4;
  m.A = Mat::Constant(1, 1, a);
  m.B = Mat::Constant(1, 1, b);
  m.C = Mat::Constant(1, 1, c);
  m.Q = Mat::Constant(1, 1, q);
  m.R = Mat::Constant(1, 1, r);
  m.Sigma_eps = Mat::Constant(1, 1, se);
  m.Sigma_tau = Mat::Constant(1, 1, st);
  m.horizon = 2;
  LinearPolicy pi = zero_linear_policy(m, 0);
  pi.U1[0](0, 0) = u;
  pi.U1[1](0, 0) = u;
  QuadValueParams p = lqg_value_params(m, pi);
  // last step: -(q + r u^2 c^2) s^2 - r u^2 st
  double L2 = -(q + r * u * u * c * c), G2 = -r * u * u * st;
  CHECK(p.Lambda[1](0, 0) == doctest::Approx(L2).epsilon(1e-14));
  CHECK(p.Gamma[1] == doctest::Approx(G2).epsilon(1e-14));
  double k = a + b * u * c;
  CHECK(p.Lambda[0](0, 0) == doctest::Approx(L2 + k * k * L2).epsilon(1e-14));
  double noise = b * b * u * u * st + se;
  CHECK(p.Gamma[0] == doctest::Approx(G2 + L2 * noise + G2).epsilon(1e-14));
  // link side: s = o / c minus the observation-noise correction
  CHECK(p.Lambda_bar[1](0, 0) == doctest::Approx(L2 / (c * c)).epsilon(1e-14));
  CHECK(p.Gamma_bar[1] == doctest::Approx(G2 - L2 * st / (c * c)).epsilon(1e-14));
  CHECK(lqg_xi1(m, pi, 1)(0, 0) == doctest::Approx(k).epsilon(1e-14));
}

TEST_CASE("zero costs give zero value") {
  LqgModel m = small_model(3);
  m.Q.setZero();
  m.R.setZero();
  QuadValueParams p = lqg_value_params(m, small_policy(m));
  for (int h = 1; h <= 3; ++h) {
    CHECK(p.Lambda[h - 1].cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.Gamma[h - 1] == 0.0);
    CHECK(p.Lambda_bar[h - 1].cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.Gamma_bar[h - 1] == 0.0);
  }
}

TEST_CASE("quadratic value and link against rollouts") {
  LqgModel m = small_model(3);
  LinearPolicy pi = small_policy(m);
  QuadValueParams p = lqg_value_params(m, pi);
  oracle::LqgSim sim(m, pi, 91);
  const int n = 100000;
  Vec s(2), z(3);
  s << 0.7, -0.4;
  z << 0.3, -0.2, 0.5;
  for (int h = 1; h <= 3; ++h) {
    Vec zh = h == 1 ? Vec(0) : z;
    std::vector<double> ret(n), link(n);
    for (int i = 0; i < n; ++i) ret[i] = sim.run(h, zh, s);
    oracle::MeanSe st = oracle::mean_se(ret);
    CHECK(std::abs(st.mean - p.value(h, zh, s)) <= 3.0 * st.se);
    // the link on a noisy observation of s is unbiased for the value
    for (int i = 0; i < n; ++i) link[i] = p.link(h, zh, m.C * s + sim.draw(sim.Lt));
    oracle::MeanSe sl = oracle::mean_se(link);
    CHECK(std::abs(sl.mean - p.value(h, zh, s)) <= 3.0 * sl.se + 1e-12);
  }
  Rng rng(3);
  std::vector<double> lib(n);
  for (int i = 0; i < n; ++i) lib[i] = lqg_rollout_from(m, pi, 2, z, s, rng);
  oracle::MeanSe sb = oracle::mean_se(lib);
  CHECK(std::abs(sb.mean - p.value(2, z, s)) <= 3.0 * sb.se);
}

TEST_CASE("policy registration") {
  LqgModel m = small_model(3);
  PolicyRegistration reg = register_policy(m, small_policy(m));
  CHECK(reg.xi_norms.size() == 2);
  for (double x : reg.xi_norms) CHECK(x <= 1.0);
  LinearPolicy loud = small_policy(m);
  loud.U1[0] << 8.0, 8.0;
  CHECK_THROWS_AS(register_policy(m, loud), ConfigError);
  CHECK_NOTHROW(register_policy(m, loud, 1e6, false));
  CHECK_THROWS_AS(register_policy(m, loud, 1.0, false), ConfigError);
  LinearPolicy shape = small_policy(m);
  shape.U2[1] = Mat::Zero(1, 2);
  CHECK_THROWS_AS(register_policy(m, shape), ConfigError);

  LqgModel rank = m;
  rank.C << 1.0, 2.0, 0.5, 1.0;
  CHECK_THROWS_AS(rank.validate(), ConfigError);
  LqgModel indef = m;
  indef.R(0, 0) = -1.0;
  CHECK_THROWS_AS(indef.validate(), ConfigError);
}

TEST_CASE("loss truncation and atom weights") {
  LqgModel m = small_model(3);
  LinearPolicy pi = small_policy(m);
  QuadValueParams p = lqg_value_params(m, pi);
  AlphaDesign ad = make_alpha_design(lqg_design_candidates(1, lqg_action_radius(m, pi), 9, 0));
  CHECK(ad.atoms.size() >= 2);
  LqgThresholds th = lqg_thresholds(m, pi, ad, 2, 1000);
  Rng rng(8);
  std::vector<LqgTuple> tps = lqg_collect(m, pi, ad, 2, 200, rng);
  for (LqgTuple tp : tps) {
    tp.z = Vec::Constant(tp.z.size(), 1e3);
    CHECK(lqg_loss(tp, p, m, pi, ad, th) == 0.0);
  }
  for (LqgTuple tp : tps) {
    tp.o_next = Vec::Constant(2, 1e3);
    CHECK(lqg_loss(tp, p, m, pi, ad, th) == 0.0);
  }
  const double n1 = static_cast<double>(ad.atoms.size() + 1);
  int hit = 0;
  for (const LqgTuple& tp : tps) {
    Vec zb(tp.z.size() + tp.o.size());
    zb << tp.z, tp.o;
    if (zb.norm() > th.Z1 || std::abs(tp.r) > th.Z2 || tp.o_next.norm() > th.Z3) continue;
    Vec c = mixing_coeffs(ad, lqg_action(pi, 2, tp.z, tp.o));
    double w = tp.atom == 0 ? 1.0 - c.sum() : c[tp.atom - 1];
    double u = p.link(2, tp.z, tp.o) - tp.r - p.link(3, tp.z_next, tp.o_next);
    CHECK(lqg_loss(tp, p, m, pi, ad, th) == doctest::Approx(n1 * w * u).epsilon(1e-12));
    ++hit;
  }
  CHECK(hit > 150);
}

TEST_CASE("loss is Bellman-null at the exact link") {
  LqgModel m = small_model(3);
  LinearPolicy pi = small_policy(m);
  QuadValueParams p = lqg_value_params(m, pi);
  AlphaDesign ad = make_alpha_design(lqg_design_candidates(1, lqg_action_radius(m, pi), 9, 0));
  const long n = 1000000;
  for (int h = 1; h <= 3; ++h) {
    Rng rng = Rng::substream(5, h);
    std::vector<LqgTuple> tps = lqg_collect(m, pi, ad, h, n, rng);
    LqgThresholds th = lqg_thresholds(m, pi, ad, h, n);
    std::vector<double> l(n);
    for (long i = 0; i < n; ++i) l[i] = lqg_loss(tps[i], p, m, pi, ad, th);
    oracle::MeanSe st = oracle::mean_se(l);
    CHECK(std::abs(st.mean) <= 3.0 * st.se);
  }
}
