#include "pobilin/generators.hpp"

#include "pobilin/io.hpp"

#include <cstdio>

namespace pobilin {

namespace {

void fill_common(TabularPomdp& m, int S, int O, int A, int H, Rng& rng) {
  m.n_states = S;
  m.n_obs = O;
  m.n_actions = A;
  m.horizon = H;
  m.transition.assign(A, Mat(S, S));
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) m.transition[a].row(s) = rng.dirichlet(S).transpose();
  m.reward = Mat(O, A);
  for (int o = 0; o < O; ++o)
    for (int a = 0; a < A; ++a) m.reward(o, a) = rng.uniform();
  m.init_belief = rng.dirichlet(S);
}

void check_sizes(int S, int O, int A, int H) {
  if (S < 1 || O < 1 || A < 1 || H < 1) throw ConfigError("generator: sizes and horizon must be positive");
}

}  // namespace

TabularPomdp gen_observable_pomdp(int S, int O, int A, int H, double sigma_target, std::uint64_t seed,
                                  const ObservableGenOptions& opt) {
  check_sizes(S, O, A, H);
  if (!(sigma_target > 0.0)) throw ConfigError("generator: sigma_target must be positive");
  Rng rng = Rng::substream(seed, 0x0b5e);
  TabularPomdp m;
  fill_common(m, S, O, A, H, rng);
  const bool over = O < S;
  Mat P = Mat::Zero(S, O);
  for (int s = 0; s < S; ++s) P(s, s % O) = 1.0;
  double eta_max = sigma_target >= 1.0 && !over ? 0.0 : 1.0;
  for (int tries = 0; tries < opt.max_tries; ++tries) {
    double eta = over ? rng.uniform() : eta_max * rng.uniform();
    Mat E(S, O);
    for (int s = 0; s < S; ++s) E.row(s) = (1.0 - eta) * P.row(s) + eta * rng.dirichlet(O).transpose();
    m.emission = E;
    Mat Ob = over ? build_OK_matrix(m, opt.K_overcomplete) : m.obs_matrix();
    if (numerical_rank(Ob) == S && l1_operator_norm(pinv(Ob)) <= 1.0 / sigma_target + 1e-12) {
      m.validate();
      return m;
    }
    if (!over) eta_max *= 0.8;
  }
  throw ResourceError("generator: rejection budget exhausted before reaching the observability target");
}

DecodableInstance gen_mstep_decodable(int S, int O, int A, int H, int M, int rank_d, std::uint64_t seed) {
  check_sizes(S, O, A, H);
  if (M < 0) throw ConfigError("generator: memory must be non-negative");
  Rng rng = Rng::substream(seed, 0xdec0, static_cast<std::uint64_t>(M));
  DecodableInstance inst;
  TabularPomdp& m = inst.model;
  m.n_states = S;
  m.n_obs = O;
  m.n_actions = A;
  m.horizon = H;
  m.reward = Mat(O, A);
  for (int o = 0; o < O; ++o)
    for (int a = 0; a < A; ++a) m.reward(o, a) = rng.uniform();
  m.emission = Mat::Zero(S, O);
  MemorySpace sp(O, A, M, H);
  inst.decoder.memory = M;
  inst.decoder.map.resize(H);
  FactoredTransition& f = inst.factorization;

  if (M == 0) {
    if (O < S) throw ConfigError("block MDP needs n_obs >= n_states");
    if (rank_d < 1 || rank_d > S) throw ConfigError("generator: rank_d must lie in [1, n_states]");
    for (int s = 0; s < S; ++s) {
      std::vector<int> block;
      for (int o = s; o < O; o += S) block.push_back(o);
      Vec w = rng.dirichlet(static_cast<int>(block.size()));
      for (size_t k = 0; k < block.size(); ++k) m.emission(s, block[k]) = w[k];
    }
    f.phi = Mat(S * A, rank_d);
    f.mu = Mat(S, rank_d);
    for (int k = 0; k < rank_d; ++k) f.mu.col(k) = rng.dirichlet(S);
    for (int r = 0; r < S * A; ++r) f.phi.row(r) = rng.dirichlet(rank_d).transpose();
    m.init_belief = rng.dirichlet(S);
    for (int h = 1; h <= H; ++h) {
      inst.decoder.map[h - 1].resize(sp.zbar_size(h));
      for (long zb = 0; zb < sp.zbar_size(h); ++zb) inst.decoder.map[h - 1][zb] = static_cast<int>(zb % O) % S;
    }
  } else {
    if (S % 2 != 0) throw ConfigError("decodable generator with memory needs an even number of states");
    const int nb = S / 2;
    if (O % nb != 0) throw ConfigError("decodable generator with memory needs n_obs divisible by n_states / 2");
    const int ne = O / nb;
    if (rank_d % 2 != 0 || rank_d / 2 < 1 || rank_d / 2 > nb)
      throw ConfigError("decodable generator with memory needs an even rank_d in [2, n_states]");
    const int Kr = rank_d / 2;
    Mat q(2, ne);
    for (int c = 0; c < 2; ++c) q.row(c) = rng.dirichlet(ne).transpose();
    for (int c = 0; c < 2; ++c)
      for (int b = 0; b < nb; ++b)
        for (int e = 0; e < ne; ++e) m.emission(c * nb + b, b * ne + e) = q(c, e);
    Mat nu(nb, Kr);
    for (int k = 0; k < Kr; ++k) nu.col(k) = rng.dirichlet(nb);
    f.phi = Mat::Zero(S * A, rank_d);
    f.mu = Mat::Zero(S, rank_d);
    for (int c = 0; c < 2; ++c)
      for (int k = 0; k < Kr; ++k)
        for (int b = 0; b < nb; ++b) f.mu(c * nb + b, c * Kr + k) = nu(b, k);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        int cstar = (s % nb + a) % 2;
        f.phi.row(s * A + a).segment(cstar * Kr, Kr) = rng.dirichlet(Kr).transpose();
      }
    m.init_belief = Vec::Zero(S);
    m.init_belief.head(nb) = rng.dirichlet(nb);
    for (int h = 1; h <= H; ++h) {
      inst.decoder.map[h - 1].resize(sp.zbar_size(h));
      for (long z = 0; z < sp.z_size(h); ++z)
        for (int o = 0; o < O; ++o) {
          int c = 0;
          if (h > 1) {
            auto w = sp.decode(h, z);
            c = (w.back().first / ne + w.back().second) % 2;
          }
          inst.decoder.map[h - 1][sp.zbar(z, o)] = c * nb + o / ne;
        }
    }
  }
  m.transition.assign(A, Mat(S, S));
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) m.transition[a].row(s) = (f.mu * f.phi.row(s * A + a).transpose()).transpose();
  m.validate();
  f.check(m);
  return inst;
}

std::string model_digest(const TabularPomdp& m) {
  std::string s = model_to_json(m).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pobilin
