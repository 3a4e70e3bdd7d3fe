#pragma once

#include "pobilin/linkfn.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace pobilin {

// |A| pi(a_h | zbar_h) (g_{h+1}(zbar_{h+1}) + r_h) - g_h(zbar_h); g_{H+1} = 0.
double loss_plain(const Tuple& tp, int h, const MMemoryPolicy& pi, const LinkFunction& g);

struct LossStats {
  double mean = 0.0;
  double se = 0.0;
};
double sigma_estimate(const Dataset& d, const MMemoryPolicy& pi, const LinkFunction& g);
LossStats loss_stats(const Dataset& d, const MMemoryPolicy& pi, const LinkFunction& g);

// E[g_h(zbar^K_h) - r_h - g_{h+1}(zbar^K_{h+1})] with a_{1:h-1} ~ roll_in, a_h ~ pi and
// uniform future actions, by enumeration of every observable sequence.
double brute_bellman_error(const TabularPomdp& m, const MMemoryPolicy& roll_in, const MMemoryPolicy& pi,
                           const LinkFunction& g, int h, long node_cap = 50'000'000);

struct BilinearCertificate {
  int h = 1;
  Vec W;  // over (z_{h-1}, s_h), z-major
  Vec X;
  double inner = 0.0;
  double bellman = 0.0;
  double gap() const { return std::abs(inner - bellman); }
};
// W_h(pi, g) = K_h^T(theta_h - theta*_h) - T_pi^T K_{h+1}^T(theta_{h+1} - theta*_{h+1}), theta* = g^pi.
Vec bilinear_W(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g, int h,
               const LinkFunction& g_star);
BilinearCertificate bilinear_decompose_tabular(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g,
                                               const MMemoryPolicy& roll_in, int h);

struct EllipticalReport {
  std::vector<std::vector<double>> norms;  // norms[t][h-1] = ||X_h(pi^t)||_{Sigma^{-1}_{t,h}}
  double lhs = 0.0;
  double rhs = 0.0;
  int d = 0;
  double B_X = 0.0;
  bool holds() const { return lhs <= rhs; }
};
// X[t][h-1] are the feature vectors of the t-th iterate.
EllipticalReport elliptical_diagnostics(const std::vector<std::vector<Vec>>& X, double lambda, double B_X);

int compute_iteration_budget(int H, int d, double B_X, double B_W, double eps_gen);

enum class LearnerMode { Plain, MultiStep, Discriminator };

struct LearnerConfig {
  int T = 1;
  long m = 1000;
  long m0 = 0;  // size of D^0; 0 means m
  double R = std::numeric_limits<double>::infinity();
  double lambda = 1.0;
  int K = 1;
  LearnerMode mode = LearnerMode::Plain;
  std::uint64_t seed = 0;
  int initial_policy = 0;
  bool oracle = true;  // evaluate J(pi^t) and the optimism / elliptical diagnostics
  void validate() const;
};

struct TraceRow {
  int t = 0;
  int rollin_policy = -1;
  int policy = -1;
  int link = -1;
  double objective = 0.0;
  std::vector<double> sigma_chosen;     // sigma^t_h of the chosen pair, per h (NaN at t = 1)
  std::vector<double> sigma_star;       // sigma^t_h of (pi*, g^{pi*}) per h
  std::vector<double> sigma_max;        // max over still-feasible pairs per h
  bool star_feasible = true;
  long n_feasible = 0;
  double J = 0.0;
};

struct RunResult {
  int policy = -1;  // index of pi-hat in the class
  int selected_t = 0;
  int best_iterate_policy = -1;
  double J_hat = 0.0;
  double J_star = 0.0;
  double J_best_iterate = 0.0;
  int star_policy = -1;
  int star_link = -1;
  double R = 0.0;
  double eps_ini = 0.0;
  bool optimism_holds = true;
  bool star_always_feasible = true;
  double star_sigma_max = 0.0;
  EllipticalReport elliptical;
  std::vector<TraceRow> trace;
  std::string summary_json() const;
  std::string trace_csv() const;
};

RunResult provable_run(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                       const LearnerConfig& cfg);

// Discriminators on zbar_h (decodable) or on full histories tau_h.
struct DiscriminatorClass {
  enum class Domain { Memory, History } domain = Domain::Memory;
  std::vector<std::vector<Vec>> per_h;  // per_h[h-1][k]
  double bound = 0.0;
  double value(int h, int k, const Tuple& tp, const MemorySpace& sp) const;
};

double loss_discriminator(const Tuple& tp, int h, double f, const MMemoryPolicy& pi, const LinkFunction& g);
// max_f E_D[l] (|.|), with the zero discriminator guaranteeing a non-negative max.
double sigma_discriminator(const Dataset& d, const MMemoryPolicy& pi, const LinkFunction& g,
                           const DiscriminatorClass& F);

// (B^pi_h g)(zbar) through the decoder; zero on undecodable windows.
Vec bellman_backup_decodable(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g, int h,
                             const Decoder& dec);
DiscriminatorClass build_complete_discriminators(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                                                 const Decoder& dec);

RunResult provable_dis_run(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                           const DiscriminatorClass& F, const LearnerConfig& cfg);

struct RadiusCalibration {
  double max_sigma = 0.0;  // max |sigma(pi, g^pi)| on held-out data
  double max_se = 0.0;     // max standard error of those estimates
  double z = 0.0;          // union-bound multiplier over T_union * H * |Pi| checks
  double R = 0.0;
};
// Held-out calibration over certified pairs and roll-ins drawn from the class:
// radius max(slack * max_sigma, z * max_se), squared for the plain loss.
RadiusCalibration calibrate_radius(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                                   const LearnerConfig& cfg, double slack, int n_rollins,
                                   const DiscriminatorClass* F = nullptr, int T_union = 0, double delta = 0.1);
double theoretical_radius(long n_policies, long n_links, int T, int H, long m, double delta, double c = 2.0);

}  // namespace pobilin
