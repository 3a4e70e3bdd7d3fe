#pragma once

#include "pobilin/linkfn.hpp"
#include "pobilin/stability.hpp"

#include <cstdint>
#include <string>

namespace pobilin {

struct ObservableGenOptions {
  int max_tries = 2000;
  int K_overcomplete = 2;  // future length certified when n_obs < n_states
};

// Emission (1 - eta) P + eta N with P the identity-like assignment and N Dirichlet noise;
// eta is shrunk by rejection until ||O^+||_1 <= 1 / sigma_target.
TabularPomdp gen_observable_pomdp(int n_states, int n_obs, int n_actions, int H, double sigma_target,
                                  std::uint64_t seed, const ObservableGenOptions& opt = {});

struct DecodableInstance {
  TabularPomdp model;
  Decoder decoder;
  FactoredTransition factorization;
};
// M = 0: block MDP. M >= 1: s = (c, b) with o = (b, e) and c' = (b + a) mod 2, so the last pair decodes c.
DecodableInstance gen_mstep_decodable(int n_states, int n_obs, int n_actions, int H, int M, int rank_d,
                                      std::uint64_t seed);

// FNV-1a over the canonical JSON dump.
std::string model_digest(const TabularPomdp& m);

}  // namespace pobilin
