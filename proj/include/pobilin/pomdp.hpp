#pragma once

#include "pobilin/common.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pobilin {

struct TabularPomdp {
  int n_states = 0;
  int n_obs = 0;
  int n_actions = 0;
  int horizon = 0;
  std::vector<Mat> transition;  // transition[a](s, s') = T(s'|s,a)
  Mat emission;                 // emission(s, o) = O(o|s)
  Mat reward;                   // reward(o, a)
  Vec init_belief;

  void validate() const;
  int sentinel_obs() const { return n_obs; }
  // Observation matrix in test-major layout: rows o, cols s.
  Mat obs_matrix() const { return emission.transpose(); }
};

// Enumeration of the memory spaces Z_{h-1} (window of the last min(h-1, M)
// (o,a) pairs, oldest pair in the most significant digit) and Zbar_h = Z_{h-1} x O.
struct MemorySpace {
  int n_obs = 0;
  int n_actions = 0;
  int memory = 0;
  int horizon = 0;

  MemorySpace() = default;
  MemorySpace(int O, int A, int M, int H) : n_obs(O), n_actions(A), memory(M), horizon(H) {}
  MemorySpace(const TabularPomdp& m, int M) : MemorySpace(m.n_obs, m.n_actions, M, m.horizon) {}

  int pairs() const { return n_obs * n_actions; }
  int window_len(int h) const { return std::min(h - 1, memory); }
  long z_size(int h) const;  // |Z_{h-1}|, memory available when acting at step h
  long zbar_size(int h) const { return z_size(h) * n_obs; }
  long zbar(long z, int o) const { return z * n_obs + o; }
  // z_{h-1} (at step h) extended by (o_h, a_h) -> z_h (index valid at step h+1).
  long append(int h, long z, int o, int a) const;
  std::vector<std::pair<int, int>> decode(int h, long z) const;
  long encode(const std::vector<std::pair<int, int>>& window) const;
  long max_z_size() const;
};

struct MMemoryPolicy {
  MemorySpace space;
  std::vector<Mat> tables;  // tables[h-1](zbar, a)

  const Mat& table(int h) const { return tables[h - 1]; }
  double prob(int h, long zbar, int a) const { return tables[h - 1](zbar, a); }
  void validate() const;
  bool operator==(const MMemoryPolicy& o) const;
};

using PolicyClass = std::vector<MMemoryPolicy>;

MMemoryPolicy uniform_policy(const MemorySpace& sp);
MMemoryPolicy random_stochastic_policy(const MemorySpace& sp, Rng& rng);
MMemoryPolicy deterministic_policy(const MemorySpace& sp, const std::vector<int>& actions_flat);
long deterministic_table_size(const MemorySpace& sp);
// n distinct deterministic policies sampled uniformly (or all of them if n exceeds the class).
PolicyClass sample_deterministic_policies(const MemorySpace& sp, int n, Rng& rng);

using Belief = Vec;

Belief belief_bayes(const Belief& b, int o, const TabularPomdp& m);
Belief belief_transit(const Belief& b, int a, const TabularPomdp& m);
Belief belief_update(const Belief& b, int a, int o, const TabularPomdp& m);
// log sum_s b(s)^2 / b'(s); +infinity if support(b) is not inside support(b').
double d2_divergence(const Belief& b, const Belief& bp);

struct Episode {
  std::vector<int> s, o, a;
  std::vector<double> r;
};

Episode sample_episode(const TabularPomdp& m, const MMemoryPolicy& pi, Rng& rng);

enum class SwitchMode { UniformAtH, UniformFromMh };

// One collected tuple. obs = (o_h, ..., o_{h+K}) and acts = (a_h, ..., a_{h+K-1});
// slots past the horizon hold the sentinel observation / action -1.
struct Tuple {
  long z = 0;
  std::vector<int> obs;
  std::vector<int> acts;
  double r = 0.0;
  long hist = -1;  // full-history index of tau_h, -1 if too large to enumerate
  int o() const { return obs[0]; }
  int a() const { return acts[0]; }
  int o_next() const { return obs[1]; }
};

struct Dataset {
  int h = 1;
  int t = 0;
  int K = 1;
  std::string collector;
  std::vector<Tuple> tuples;
};

long history_index_cap();
long history_size(const TabularPomdp& m, int h);

Dataset collect_tuples(const TabularPomdp& m, const MMemoryPolicy& roll_in, int h, int n, SwitchMode sw, Rng& rng,
                       int K = 1);
// First-step data D^0: (o_1, a_1, ..., o_K) with uniform actions.
Dataset collect_initial(const TabularPomdp& m, int n, Rng& rng, int K = 1);

// Distinct tuples with empirical weights count/m.
struct CountedDataset {
  int h = 1;
  int K = 1;
  long m = 0;
  std::vector<Tuple> cells;
  std::vector<double> weight;
  std::vector<long> count;
};
CountedDataset compress(const Dataset& d);

// V[h-1](z, s) for h = 1..H.
struct ValueTable {
  std::vector<Mat> V;
  const Mat& at(int h) const { return V[h - 1]; }
};

long memory_cap();
// X_h(z_{h-1}, s_h) = P(z_{h-1}, s_h) under the roll-in, out[h-1](z, s).
std::vector<Mat> occupancy(const TabularPomdp& m, const MMemoryPolicy& pi);
ValueTable exact_value_function(const TabularPomdp& m, const MMemoryPolicy& pi);
double exact_policy_value(const TabularPomdp& m, const MMemoryPolicy& pi);
std::pair<int, double> best_in_class(const TabularPomdp& m, const PolicyClass& cls);
double global_optimal_value(const TabularPomdp& m, long node_cap = 20'000'000);

struct MemoryOptimum {
  double value = 0.0;
  MMemoryPolicy policy;
  long policies_searched = 0;
};
// Best deterministic M-memory policy: exhaustive for M < H-1, tree DP otherwise.
MemoryOptimum best_memory_policy(const TabularPomdp& m, int M, long enum_cap = 1L << 22);

}  // namespace pobilin
