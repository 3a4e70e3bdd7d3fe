#include "pobilin/linkfn.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace pobilin {

long future_key(const int* obs, const int* acts, int k, int n_obs, int n_actions) {
  long key = obs[0];
  for (int j = 1; j < k; ++j) key = (key * n_actions + acts[j - 1]) * n_obs + obs[j];
  return key;
}

long future_key_count(int k, int n_obs, int n_actions) {
  long n = n_obs;
  for (int j = 1; j < k; ++j) n *= static_cast<long>(n_actions) * n_obs;
  return n;
}

double LinkFunction::eval(int h, long z, const int* obs, const int* acts) const {
  if (h > space.horizon) return 0.0;
  int k = future_len(h);
  return theta[h - 1](z, future_key(obs, acts, k, space.n_obs, space.n_actions));
}

double LinkFunction::sup_norm() const {
  double s = 0.0;
  for (const Mat& t : theta)
    if (t.size()) s = std::max(s, t.cwiseAbs().maxCoeff());
  return s;
}

bool LinkFunction::operator==(const LinkFunction& o) const {
  if (K != o.K || space.memory != o.space.memory || theta.size() != o.theta.size()) return false;
  for (size_t i = 0; i < theta.size(); ++i)
    if (theta[i] != o.theta[i]) return false;
  return true;
}

Mat build_OK_matrix(const TabularPomdp& m, int K) {
  if (K < 1) throw ConfigError("build_OK_matrix: K must be >= 1");
  const int S = m.n_states, O = m.n_obs, A = m.n_actions;
  Mat out = Mat::Zero(future_key_count(K, O, A), S);
  // beta(s') = P(prefix, s_current = s' | s_h = s), one column per starting state.
  std::function<void(int, long, const Mat&)> rec = [&](int j, long key, const Mat& beta) {
    for (int o = 0; o < O; ++o) {
      Mat bo = m.emission.col(o).asDiagonal() * beta;
      long k2 = j == 0 ? o : key * O + o;
      if (j == K - 1) {
        out.row(k2) = bo.colwise().sum();
        continue;
      }
      for (int a = 0; a < A; ++a) rec(j + 1, k2 * A + a, (m.transition[a].transpose() * bo) / A);
    }
  };
  rec(0, 0, Mat::Identity(S, S));
  return out;
}

ObservabilityReport observability(const Mat& OK) {
  ObservabilityReport r;
  r.rank = numerical_rank(OK);
  r.sigma_min = sigma_min(OK);
  r.l1_pinv = l1_operator_norm(pinv(OK));
  return r;
}

namespace {

// Importance-weighted return over the remaining horizon with uniform future actions.
Mat return_link_step(const TabularPomdp& m, const MMemoryPolicy& pi, int h, int k) {
  const MemorySpace& sp = pi.space;
  const int O = m.n_obs, A = m.n_actions;
  Mat out = Mat::Zero(sp.z_size(h), future_key_count(k, O, A));
  for (long z = 0; z < out.rows(); ++z) {
    Mat row = Mat::Zero(1, out.cols());
    std::function<void(int, long, long, double, double)> go = [&](int j, long zc, long key, double w, double acc) {
      int step = h + j;
      for (int o = 0; o < O; ++o) {
        long k2 = j == 0 ? o : key * O + o;
        long zb = sp.zbar(zc, o);
        double rexp = 0.0;
        for (int a = 0; a < A; ++a) rexp += pi.prob(step, zb, a) * m.reward(o, a);
        double acc2 = acc + w * rexp;
        if (j == k - 1) {
          row(0, k2) = acc2;
          continue;
        }
        for (int a = 0; a < A; ++a)
          go(j + 1, sp.append(step, zc, o, a), k2 * A + a, w * A * pi.prob(step, zb, a), acc2);
      }
    };
    go(0, z, 0, 1.0, 0.0);
    out.row(z) = row;
  }
  return out;
}

}  // namespace

LinkFunction construct_link_multistep(const TabularPomdp& m, const MMemoryPolicy& pi, int K) {
  if (K < 1) throw ConfigError("link: K must be >= 1");
  ValueTable vt = exact_value_function(m, pi);
  LinkFunction g;
  g.K = K;
  g.space = pi.space;
  g.theta.resize(m.horizon);
  std::vector<Mat> pinvs(K + 1);
  std::vector<int> ranks(K + 1, -1);
  for (int h = 1; h <= m.horizon; ++h) {
    int k = g.future_len(h);
    if (ranks[k] < 0) {
      Mat OK = build_OK_matrix(m, k);
      ranks[k] = numerical_rank(OK);
      if (ranks[k] == m.n_states) pinvs[k] = pinv(OK);
    }
    if (ranks[k] == m.n_states) {
      g.theta[h - 1] = vt.at(h) * pinvs[k];
    } else if (h + k - 1 == m.horizon) {
      g.theta[h - 1] = return_link_step(m, pi, h, k);
    } else {
      Mat OK = build_OK_matrix(m, k);
      std::ostringstream os;
      os << "future-observation matrix of length " << k << " has rank " << ranks[k] << " < " << m.n_states;
      throw ObservabilityError(os.str(), sigma_min(OK));
    }
  }
  return g;
}

LinkFunction construct_link_tabular(const TabularPomdp& m, const MMemoryPolicy& pi) {
  if (m.n_obs < m.n_states || numerical_rank(m.obs_matrix()) < m.n_states)
    throw ObservabilityError("emission matrix is not full column rank", sigma_min(m.obs_matrix()));
  return construct_link_multistep(m, pi, 1);
}

LinkFunction construct_link_return(const TabularPomdp& m, const MMemoryPolicy& pi) {
  LinkFunction g;
  g.K = m.horizon;
  g.space = pi.space;
  g.theta.resize(m.horizon);
  for (int h = 1; h <= m.horizon; ++h) g.theta[h - 1] = return_link_step(m, pi, h, g.future_len(h));
  return g;
}

LinkFunction construct_link_decodable(const TabularPomdp& m, const MMemoryPolicy& pi, const Decoder& dec) {
  if (dec.memory != pi.space.memory) throw ConfigError("decoder and policy memory differ");
  ValueTable vt = exact_value_function(m, pi);
  LinkFunction g;
  g.K = 1;
  g.space = pi.space;
  g.theta.resize(m.horizon);
  for (int h = 1; h <= m.horizon; ++h) {
    Mat t = Mat::Zero(pi.space.z_size(h), m.n_obs);
    for (long z = 0; z < t.rows(); ++z)
      for (int o = 0; o < m.n_obs; ++o) {
        long zb = pi.space.zbar(z, o);
        int s = dec.at(h, zb);
        if (s < 0) continue;
        // value given the whole window zbar, not averaged over o_h given s
        double v = 0.0;
        for (int a = 0; a < m.n_actions; ++a) {
          double p = pi.prob(h, zb, a);
          if (p == 0.0) continue;
          double cont = 0.0;
          if (h < m.horizon) cont = m.transition[a].row(s).dot(vt.at(h + 1).row(pi.space.append(h, z, o, a)));
          v += p * (m.reward(o, a) + cont);
        }
        t(z, o) = v;
      }
    g.theta[h - 1] = t;
  }
  return g;
}

std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> reachable_atoms(const TabularPomdp& m,
                                                                                const MemorySpace& sp) {
  std::vector<Mat> X = occupancy(m, uniform_policy(sp));
  std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> out;
  for (const Mat& x : X) out.push_back(x.array() > 0.0);
  return out;
}

double verify_link(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g) {
  ValueTable vt = exact_value_function(m, pi);
  auto reach = reachable_atoms(m, pi.space);
  std::vector<Mat> OKs(g.K + 1);
  double worst = 0.0;
  for (int h = 1; h <= m.horizon; ++h) {
    int k = g.future_len(h);
    if (OKs[k].size() == 0) OKs[k] = build_OK_matrix(m, k);
    Mat cond = g.theta[h - 1] * OKs[k];
    for (long z = 0; z < cond.rows(); ++z)
      for (int s = 0; s < m.n_states; ++s)
        if (reach[h - 1](z, s)) worst = std::max(worst, std::abs(cond(z, s) - vt.at(h)(z, s)));
  }
  return worst;
}

EmbeddingSpec EmbeddingSpec::tabular(const TabularPomdp& m, long z_size) {
  EmbeddingSpec e;
  Mat Ob = m.obs_matrix();
  e.Kop = Mat::Zero(z_size * m.n_obs, z_size * m.n_states);
  for (long z = 0; z < z_size; ++z) e.Kop.block(z * m.n_obs, z * m.n_states, m.n_obs, m.n_states) = Ob;
  return e;
}

Vec construct_link_from_embedding(const EmbeddingSpec& spec, const Vec& theta) {
  if (theta.size() != spec.Kop.cols()) throw ConfigError("embedding: coefficient size mismatch");
  if (numerical_rank(spec.Kop) < spec.Kop.cols())
    throw ObservabilityError("conditional-mean operator is not full column rank", sigma_min(spec.Kop));
  return pinv(spec.Kop).transpose() * theta;
}

LinkClass make_link_class(const TabularPomdp& m, const PolicyClass& cls, int K, double grid_resolution,
                          double grid_bound, long grid_cap) {
  LinkClass lc;
  for (size_t i = 0; i < cls.size(); ++i) {
    LinkFunction g = construct_link_multistep(m, cls[i], K);
    int dup = -1;
    for (size_t j = 0; j < lc.links.size() && dup < 0; ++j)
      if (lc.links[j] == g) dup = static_cast<int>(j);
    if (dup >= 0) {
      lc.policy_link.push_back(dup);
      continue;
    }
    lc.policy_link.push_back(static_cast<int>(lc.links.size()));
    lc.certificate.push_back(verify_link(m, cls[i], g));
    lc.links.push_back(std::move(g));
    lc.source_policy.push_back(static_cast<int>(i));
  }
  if (grid_resolution > 0.0) {
    if (cls.empty()) throw ConfigError("link grid needs a memory space from the policy class");
    const MemorySpace& sp = cls[0].space;
    long coords = 0;
    for (int h = 1; h <= m.horizon; ++h)
      coords += sp.z_size(h) * future_key_count(std::min(K, m.horizon - h + 1), m.n_obs, m.n_actions);
    long levels = static_cast<long>(std::floor(2.0 * grid_bound / grid_resolution)) + 1;
    double total = std::pow(static_cast<double>(levels), static_cast<double>(coords));
    if (total > static_cast<double>(grid_cap)) throw ResourceError("link grid exceeds cap");
    std::vector<long> digit(coords, 0);
    for (long n = 0; n < static_cast<long>(total); ++n) {
      LinkFunction g;
      g.K = K;
      g.space = sp;
      long c = 0;
      for (int h = 1; h <= m.horizon; ++h) {
        Mat t(sp.z_size(h), future_key_count(g.future_len(h), m.n_obs, m.n_actions));
        for (long i = 0; i < t.size(); ++i) t.data()[i] = -grid_bound + grid_resolution * digit[c++];
        g.theta.push_back(t);
      }
      lc.links.push_back(std::move(g));
      lc.source_policy.push_back(-1);
      for (long i = coords - 1; i >= 0; --i) {
        if (++digit[i] < levels) break;
        digit[i] = 0;
      }
    }
  }
  for (const auto& g : lc.links) lc.bound = std::max(lc.bound, g.sup_norm());
  return lc;
}

}  // namespace pobilin
