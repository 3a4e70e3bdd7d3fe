#pragma once

#include "pobilin/design.hpp"

#include <vector>

namespace pobilin {

struct LqgModel {
  Mat A, B, C, Q, R, Sigma_eps, Sigma_tau;
  Mat Sigma_init;  // covariance of s_1; defaults to Sigma_eps when empty
  int horizon = 1;

  int ds() const { return static_cast<int>(A.rows()); }
  int da() const { return static_cast<int>(B.cols()); }
  int d_o() const { return static_cast<int>(C.rows()); }
  const Mat& init_cov() const { return Sigma_init.size() ? Sigma_init : Sigma_eps; }
  void validate() const;
};

// a_h = U1[h-1] o_h + U2[h-1] z_{h-1}; z holds the last min(h-1, M) pairs [o; a], oldest first.
struct LinearPolicy {
  int memory = 0;
  std::vector<Mat> U1;
  std::vector<Mat> U2;
};

int lqg_z_dim(const LqgModel& m, int memory, int h);  // dim z_{h-1}
LinearPolicy zero_linear_policy(const LqgModel& m, int memory);

struct PolicyRegistration {
  std::vector<double> xi_norms;  // ||Xi_1h||_2 for h = 1..H-1
  double max_gain_norm = 0.0;
};
// Throws ConfigError on shape errors, gain norms above gain_bound, or ||Xi_1h|| > 1.
PolicyRegistration register_policy(const LqgModel& m, const LinearPolicy& pi, double gain_bound = 1e6,
                                   bool enforce_operator_norm = true);

// x_{h+1} = Xi1 x_h + Xi2-noise with x_h = [z_{h-1}; s_h].
Mat lqg_xi1(const LqgModel& m, const LinearPolicy& pi, int h);
Mat lqg_xi2_cov(const LqgModel& m, const LinearPolicy& pi, int h);
// Cov(x_h) for h = 1..H.
std::vector<Mat> lqg_state_covariances(const LqgModel& m, const LinearPolicy& pi);

struct QuadValueParams {
  std::vector<Mat> Lambda;  // over [z_{h-1}; s_h]
  std::vector<double> Gamma;
  std::vector<Mat> Lambda_bar;  // over [z_{h-1}; o_h]
  std::vector<double> Gamma_bar;
  double value(int h, const Vec& z, const Vec& s) const;
  double link(int h, const Vec& z, const Vec& o) const;
};
QuadValueParams lqg_value_params(const LqgModel& m, const LinearPolicy& pi);

struct LqgEpisode {
  std::vector<Vec> s, o, a, z;  // z[h-1] = z_{h-1}
  std::vector<double> r;
};
Vec lqg_append(const LqgModel& m, int memory, int h, const Vec& z, const Vec& o, const Vec& a);
Vec lqg_action(const LinearPolicy& pi, int h, const Vec& z, const Vec& o);
LqgEpisode lqg_simulate(const LqgModel& m, const LinearPolicy& pi, Rng& rng);
// Return sum_{t>=h} r_t from a given (z_{h-1}, s_h).
double lqg_rollout_from(const LqgModel& m, const LinearPolicy& pi, int h, const Vec& z, const Vec& s, Rng& rng);

struct LqgTuple {
  int h = 1;
  Vec z, o;
  int atom = 0;  // 0: zero action, i >= 1: design atom i
  Vec a;
  double r = 0.0;
  Vec z_next, o_next;  // o_next empty at h = H
};
// Roll in with pi for steps < h, then a_h uniform over {0, a^1, ..., a^n}.
std::vector<LqgTuple> lqg_collect(const LqgModel& m, const LinearPolicy& roll_in, const AlphaDesign& ad, int h,
                                  long n, Rng& rng);

struct LqgThresholds {
  double Z1 = 0.0, Z2 = 0.0, Z3 = 0.0;
};
LqgThresholds lqg_thresholds(const LqgModel& m, const LinearPolicy& roll_in, const AlphaDesign& ad, int h, long n);

double lqg_loss(const LqgTuple& tp, const QuadValueParams& theta, const LqgModel& m, const LinearPolicy& pi,
                const AlphaDesign& ad, const LqgThresholds& th);

// Atoms on [-Z, Z] (d_a = 1) or seeded in the Z-ball with half on its boundary sphere;
// Z = 4 x largest closed-loop std of a.
double lqg_action_radius(const LqgModel& m, const LinearPolicy& ref);
std::vector<Vec> lqg_design_candidates(int d_a, double Z, int n, std::uint64_t seed);

}  // namespace pobilin
