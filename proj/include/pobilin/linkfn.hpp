#pragma once

#include "pobilin/pomdp.hpp"

#include <vector>

namespace pobilin {

// Key of a future (o_0, a_0, o_1, ..., a_{k-2}, o_{k-1}): interleaved mixed radix.
long future_key(const int* obs, const int* acts, int k, int n_obs, int n_actions);
long future_key_count(int k, int n_obs, int n_actions);

struct LinkFunction {
  int K = 1;
  MemorySpace space;
  std::vector<Mat> theta;  // theta[h-1](z, key) over Z_{h-1} x futures of length future_len(h)

  int future_len(int h) const { return std::min(K, space.horizon - h + 1); }
  double at(int h, long z, long key) const { return theta[h - 1](z, key); }
  // g_h at z_{h-1} = z with the future read from obs / acts.
  double eval(int h, long z, const int* obs, const int* acts) const;
  double sup_norm() const;
  bool operator==(const LinkFunction& o) const;
};

// Counts of observation/action futures under uniform future actions: rows keys, cols s.
Mat build_OK_matrix(const TabularPomdp& m, int K);

struct ObservabilityReport {
  double l1_pinv = 0.0;  // max column abs-sum of the pseudo-inverse
  double sigma_min = 0.0;
  int rank = 0;
};
ObservabilityReport observability(const Mat& OK);

LinkFunction construct_link_tabular(const TabularPomdp& m, const MMemoryPolicy& pi);
LinkFunction construct_link_multistep(const TabularPomdp& m, const MMemoryPolicy& pi, int K);
// Importance-weighted return link, valid at steps whose future reaches the horizon.
LinkFunction construct_link_return(const TabularPomdp& m, const MMemoryPolicy& pi);

// Decoder iota_h(zbar) -> latent state (-1 on unreachable windows).
struct Decoder {
  int memory = 0;
  std::vector<std::vector<int>> map;  // map[h-1][zbar]
  int at(int h, long zbar) const { return map[h - 1][zbar]; }
};
LinkFunction construct_link_decodable(const TabularPomdp& m, const MMemoryPolicy& pi, const Decoder& dec);

// Reachable (z_{h-1}, s_h) atoms under a uniform roll-in: mask[h-1](z, s).
std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> reachable_atoms(const TabularPomdp& m,
                                                                                const MemorySpace& sp);

// max over reachable (h, z, s) of |E[g_h(z, future) | z, s; U] - V_h(z, s)|
double verify_link(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g);

struct EmbeddingSpec {
  Mat Kop;  // conditional-mean operator: E_{o|s} psi(z, o) = Kop * phi(z, s)
  static EmbeddingSpec tabular(const TabularPomdp& m, long z_size);
};
Vec construct_link_from_embedding(const EmbeddingSpec& spec, const Vec& theta);

struct LinkClass {
  std::vector<LinkFunction> links;
  std::vector<int> source_policy;  // policy index the link was built for, -1 for grid links
  std::vector<double> certificate; // verify_link residual for constructed links
  std::vector<int> policy_link;    // for each policy of the paired class, the index of its link
  double bound = 0.0;              // sup-norm of the class
};

// Links of every policy (deduplicated), plus an optional per-coordinate grid.
LinkClass make_link_class(const TabularPomdp& m, const PolicyClass& cls, int K, double grid_resolution = 0.0,
                          double grid_bound = 1.0, long grid_cap = 100000);

}  // namespace pobilin
