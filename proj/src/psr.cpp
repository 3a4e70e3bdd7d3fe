#include "pobilin/psr.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace pobilin {

namespace {

// Row vector u with P(obs | s, do(acts)) = u(s).
Vec test_row(const TabularPomdp& m, const std::vector<int>& obs, const std::vector<int>& acts) {
  if (obs.empty() || acts.size() + 1 != obs.size()) throw ConfigError("test needs W observations and W-1 actions");
  Vec u = m.emission.col(obs.back());
  for (int j = static_cast<int>(obs.size()) - 2; j >= 0; --j)
    u = (m.transition[acts[j]] * u).cwiseProduct(m.emission.col(obs[j]));
  return u;
}

}  // namespace

void LinearPsr::validate(int L) const {
  if (dim < 1 || n_obs < 1 || n_actions < 1) throw ConfigError("psr: sizes must be positive");
  if (q1.size() != dim || static_cast<int>(m_o.size()) != n_obs || static_cast<int>(M.size()) != n_actions)
    throw ConfigError("psr: parameter shapes do not match dim / n_obs / n_actions");
  for (const auto& v : m_o)
    if (v.size() != dim) throw ConfigError("psr: normaliser has wrong size");
  for (const auto& row : M) {
    if (static_cast<int>(row.size()) != n_obs) throw ConfigError("psr: filter matrices need one entry per observation");
    for (const auto& x : row)
      if (x.rows() != dim || x.cols() != dim) throw ConfigError("psr: filter matrix has wrong shape");
  }
  std::function<void(const Vec&, int)> rec = [&](const Vec& q, int depth) {
    double tot = 0.0;
    for (int o = 0; o < n_obs; ++o) {
      double p = m_o[o].dot(q);
      if (p < -1e-9 || p > 1.0 + 1e-9) {
        std::ostringstream os;
        os << "psr: next-observation prediction " << p << " leaves [0,1] at depth " << depth;
        throw ConfigError(os.str());
      }
      tot += p;
    }
    if (std::abs(tot - 1.0) > 1e-9) throw ConfigError("psr: next-observation predictions do not sum to 1");
    if (depth == L) return;
    for (int o = 0; o < n_obs; ++o) {
      double p = m_o[o].dot(q);
      if (p <= 1e-12) continue;
      for (int a = 0; a < n_actions; ++a) rec(M[a][o] * q / p, depth + 1);
    }
  };
  rec(q1, 0);
}

LinearPsr pomdp_to_psr(const TabularPomdp& m, const std::vector<PsrTest>& extra_core_tests) {
  Mat Ob(m.n_obs + extra_core_tests.size(), m.n_states);
  Ob.topRows(m.n_obs) = m.obs_matrix();
  for (size_t i = 0; i < extra_core_tests.size(); ++i)
    Ob.row(m.n_obs + i) = test_row(m, extra_core_tests[i].obs, extra_core_tests[i].acts).transpose();
  if (numerical_rank(Ob) < m.n_states)
    throw ObservabilityError("core-test matrix is not full column rank", sigma_min(Ob));
  Mat Op = pinv(Ob);
  LinearPsr psr;
  psr.dim = static_cast<int>(Ob.rows());
  psr.n_obs = m.n_obs;
  psr.n_actions = m.n_actions;
  psr.embedded = true;
  psr.embedding = Ob;
  psr.q1 = Ob * m.init_belief;
  psr.m_o.resize(m.n_obs);
  psr.M.assign(m.n_actions, std::vector<Mat>(m.n_obs));
  for (int o = 0; o < m.n_obs; ++o) {
    psr.m_o[o] = Op.transpose() * m.emission.col(o);
    Mat cond = m.emission.col(o).asDiagonal() * Op;
    for (int a = 0; a < m.n_actions; ++a) psr.M[a][o] = Ob * m.transition[a].transpose() * cond;
  }
  return psr;
}

double psr_obs_prob(const LinearPsr& psr, const Vec& q, int o) { return psr.m_o[o].dot(q); }

Vec psr_filter(const LinearPsr& psr, const Vec& q, int a, int o) {
  double p = psr.m_o[o].dot(q);
  if (!(p > 1e-14)) throw ImpossibleObservation("psr: observation has non-positive predicted probability");
  return psr.M[a][o] * q / p;
}

int register_test(LinearPsr& psr, const TabularPomdp& m, const std::vector<int>& obs, const std::vector<int>& acts) {
  if (!psr.embedded)
    throw ConfigError("multi-step tests are only supported for POMDP-embedded PSRs; hand-authored PSRs accept "
                      "one-step observation tests only");
  PsrTest t{obs, acts, pinv(psr.embedding).transpose() * test_row(m, obs, acts)};
  psr.tests.push_back(t);
  return static_cast<int>(psr.tests.size()) - 1;
}

TestQuery psr_test_prob(const LinearPsr& psr, const Vec& q, int test_index, double tol) {
  TestQuery r;
  double p = psr.tests.at(test_index).m.dot(q);
  if (p < -tol || p > 1.0 + tol) r.clamped = true;
  r.prob = std::min(1.0, std::max(0.0, p));
  if (!r.clamped) r.prob = p;
  return r;
}

std::vector<Mat> psr_value_bilinear(const LinearPsr& psr, const MMemoryPolicy& pi, const Mat& reward) {
  const MemorySpace& sp = pi.space;
  if (sp.n_obs != psr.n_obs || sp.n_actions != psr.n_actions) throw ConfigError("psr and policy dimensions differ");
  if (reward.rows() != psr.n_obs || reward.cols() != psr.n_actions) throw ConfigError("reward has wrong shape");
  const int H = sp.horizon;
  for (int h = 1; h <= H; ++h)
    if (sp.z_size(h) * psr.dim > memory_cap()) throw ResourceError("psr value table exceeds memory cap");
  std::vector<Mat> J(H);
  for (int h = H; h >= 1; --h) {
    Mat cur = Mat::Zero(sp.z_size(h), psr.dim);
    for (long z = 0; z < cur.rows(); ++z)
      for (int o = 0; o < psr.n_obs; ++o)
        for (int a = 0; a < psr.n_actions; ++a) {
          double p = pi.prob(h, sp.zbar(z, o), a);
          if (p == 0.0) continue;
          cur.row(z) += p * reward(o, a) * psr.m_o[o].transpose();
          if (h < H) cur.row(z) += p * J[h].row(sp.append(h, z, o, a)) * psr.M[a][o];
        }
    J[h - 1] = cur;
  }
  return J;
}

LinkFunction psr_link_construct(const LinearPsr& psr, const MMemoryPolicy& pi, const Mat& reward) {
  if (psr.dim != psr.n_obs) throw ConfigError("psr link needs exactly the one-step observation tests as core tests");
  std::vector<Mat> J = psr_value_bilinear(psr, pi, reward);
  LinkFunction g;
  g.K = 1;
  g.space = pi.space;
  g.theta = J;
  return g;
}

}  // namespace pobilin
