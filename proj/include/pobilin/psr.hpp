#pragma once

#include "pobilin/linkfn.hpp"

#include <string>
#include <vector>

namespace pobilin {

struct PsrTest {
  std::vector<int> obs;   // o_h, ..., o_{h+W-1}
  std::vector<int> acts;  // a_h, ..., a_{h+W-2}
  Vec m;                  // predictor: P(test | tau) = m^T q_tau
};

struct LinearPsr {
  int dim = 0;
  int n_obs = 0;
  int n_actions = 0;
  Vec q1;
  std::vector<Vec> m_o;               // m_o[o]
  std::vector<std::vector<Mat>> M;    // M[a][o]
  std::vector<PsrTest> tests;         // registered multi-step tests
  bool embedded = false;
  Mat embedding;                      // core-test matrix (dim x |S|) for embedded PSRs

  // Simulates every length-<=L history and rejects invalid next-observation predictions.
  void validate(int L = 3) const;
};

// q = Ob b with Ob the core-test matrix (one-step observations, then any extra tests).
LinearPsr pomdp_to_psr(const TabularPomdp& m, const std::vector<PsrTest>& extra_core_tests = {});
Vec psr_filter(const LinearPsr& psr, const Vec& q, int a, int o);
double psr_obs_prob(const LinearPsr& psr, const Vec& q, int o);

struct TestQuery {
  double prob = 0.0;
  bool clamped = false;
};
// Registers a multi-step test on an embedded PSR and returns its index.
int register_test(LinearPsr& psr, const TabularPomdp& m, const std::vector<int>& obs, const std::vector<int>& acts);
TestQuery psr_test_prob(const LinearPsr& psr, const Vec& q, int test_index, double tol = 1e-9);

// J[h-1](z, :) with V_h(tau) = J_h[z_{h-1}(tau)] . q_tau
std::vector<Mat> psr_value_bilinear(const LinearPsr& psr, const MMemoryPolicy& pi, const Mat& reward);
LinkFunction psr_link_construct(const LinearPsr& psr, const MMemoryPolicy& pi, const Mat& reward);

}  // namespace pobilin
