#pragma once

#include "pobilin/design.hpp"
#include "pobilin/pomdp.hpp"

#include <vector>

namespace pobilin {

// T(s'|s,a) = sum_k phi(s*A + a, k) mu(s', k)
struct FactoredTransition {
  Mat phi;  // (S*A) x d
  Mat mu;   // S x d
  int rank() const { return static_cast<int>(phi.cols()); }
  void check(const TabularPomdp& m, double tol = 1e-10) const;
};

struct LowRankBelief {
  Belief b0;
  DesignResult design;
  std::vector<std::pair<int, int>> support;  // (s^i, a^i)
};
LowRankBelief lowrank_initial_belief(const TabularPomdp& m, const FactoredTransition& f, const DesignOptions& opt = {});

// max over n random beliefs b (Dirichlet) and every action a of D2(T_a b, b0).
double d2_push_sweep(const TabularPomdp& m, const Belief& b0, int n, Rng& rng);

enum class FilterPrior { LowRank, Uniform };

struct ContractionRow {
  int t = 0;
  double l1_mean = 0.0, l1_se = 0.0;
  double pot_mean = 0.0, pot_se = 0.0;
  // paired differences pot_{t} - pot_{t-1} and pot_{t} - factor * pot_{t-1} (0 for t = 0)
  double diff_mean = 0.0, diff_se = 0.0;
  double factor_gap_mean = 0.0, factor_gap_se = 0.0;
  long infinite = 0;  // rollouts with D2 = inf, excluded from the potential
};

struct ContractionOptions {
  int start_h = 2;
  int t_max = 6;
  int n_rollouts = 2000;
  std::uint64_t seed = 1;
  Belief prior;  // approximate-filter prior b_bar at start_h; empty = uniform
};

struct ContractionResult {
  std::vector<ContractionRow> rows;
  double sigma1_l1 = 0.0;  // 1 / ||O^+||_1
  double factor = 1.0;     // 1 - sigma1^4 / 2^40
  bool monotone = true;
  bool within_factor = true;
};

// Exact filter from the true initial belief vs a filter restarted at start_h from the prior;
// at start_h = 1 the prior is the true initial belief.
ContractionResult contraction_experiment(const TabularPomdp& m, const MMemoryPolicy& pi, const ContractionOptions& opt);

// ceil(c sigma1^-4 ln(X H / eps)) with X = S (tabular) or the transition rank d (low-rank).
int memory_for_epsilon(double sigma1, double X, int H, double eps, double c = 1.0);

}  // namespace pobilin
