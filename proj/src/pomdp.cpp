#include "pobilin/pomdp.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace pobilin {

namespace {

void check_prob_row(const Eigen::Ref<const Vec>& row, const std::string& what) {
  for (int i = 0; i < row.size(); ++i)
    if (!(row[i] >= 0.0)) throw ConfigError(what + ": negative or NaN entry");
  if (std::abs(row.sum() - 1.0) > 1e-12) {
    std::ostringstream os;
    os << what << ": row sums to " << row.sum();
    throw ConfigError(os.str());
  }
}

long ipow(long b, int e) {
  long r = 1;
  for (int i = 0; i < e; ++i) {
    if (r > std::numeric_limits<long>::max() / std::max<long>(b, 1)) return -1;
    r *= b;
  }
  return r;
}

}  // namespace

void TabularPomdp::validate() const {
  if (n_states < 1 || n_obs < 1 || n_actions < 1 || horizon < 1) throw ConfigError("model sizes must be positive");
  if (static_cast<int>(transition.size()) != n_actions) throw ConfigError("transition must have one matrix per action");
  for (int a = 0; a < n_actions; ++a) {
    if (transition[a].rows() != n_states || transition[a].cols() != n_states)
      throw ConfigError("transition matrix has wrong shape");
    for (int s = 0; s < n_states; ++s) check_prob_row(transition[a].row(s).transpose(), "transition");
  }
  if (emission.rows() != n_states || emission.cols() != n_obs) throw ConfigError("emission has wrong shape");
  for (int s = 0; s < n_states; ++s) check_prob_row(emission.row(s).transpose(), "emission");
  if (reward.rows() != n_obs || reward.cols() != n_actions) throw ConfigError("reward has wrong shape");
  if (reward.minCoeff() < 0.0 || reward.maxCoeff() > 1.0) throw ConfigError("reward entries must lie in [0,1]");
  if (init_belief.size() != n_states) throw ConfigError("init_belief has wrong size");
  check_prob_row(init_belief, "init_belief");
}

long MemorySpace::z_size(int h) const {
  long r = ipow(pairs(), window_len(h));
  if (r < 0) throw ResourceError("memory space overflows");
  return r;
}

long MemorySpace::max_z_size() const {
  long best = 1;
  for (int h = 1; h <= horizon + 1; ++h) best = std::max(best, z_size(h));
  return best;
}

long MemorySpace::append(int h, long z, int o, int a) const {
  if (memory == 0) return 0;
  long pair = static_cast<long>(o) * n_actions + a;
  if (window_len(h) < memory) return z * pairs() + pair;
  long drop = ipow(pairs(), memory - 1);
  return (z % drop) * pairs() + pair;
}

std::vector<std::pair<int, int>> MemorySpace::decode(int h, long z) const {
  int len = window_len(h);
  std::vector<std::pair<int, int>> w(len);
  for (int i = len - 1; i >= 0; --i) {
    long p = z % pairs();
    z /= pairs();
    w[i] = {static_cast<int>(p / n_actions), static_cast<int>(p % n_actions)};
  }
  return w;
}

long MemorySpace::encode(const std::vector<std::pair<int, int>>& window) const {
  long z = 0;
  for (auto [o, a] : window) z = z * pairs() + static_cast<long>(o) * n_actions + a;
  return z;
}

void MMemoryPolicy::validate() const {
  if (static_cast<int>(tables.size()) != space.horizon) throw ConfigError("policy needs one table per step");
  for (int h = 1; h <= space.horizon; ++h) {
    const Mat& t = tables[h - 1];
    if (t.rows() != space.zbar_size(h) || t.cols() != space.n_actions) throw ConfigError("policy table has wrong shape");
    for (long i = 0; i < t.rows(); ++i) check_prob_row(t.row(i).transpose(), "policy");
  }
}

bool MMemoryPolicy::operator==(const MMemoryPolicy& o) const {
  if (space.memory != o.space.memory || tables.size() != o.tables.size()) return false;
  for (size_t i = 0; i < tables.size(); ++i)
    if (tables[i] != o.tables[i]) return false;
  return true;
}

MMemoryPolicy uniform_policy(const MemorySpace& sp) {
  MMemoryPolicy p{sp, {}};
  for (int h = 1; h <= sp.horizon; ++h)
    p.tables.push_back(Mat::Constant(sp.zbar_size(h), sp.n_actions, 1.0 / sp.n_actions));
  return p;
}

MMemoryPolicy random_stochastic_policy(const MemorySpace& sp, Rng& rng) {
  MMemoryPolicy p{sp, {}};
  for (int h = 1; h <= sp.horizon; ++h) {
    Mat t(sp.zbar_size(h), sp.n_actions);
    for (long i = 0; i < t.rows(); ++i) t.row(i) = rng.dirichlet(sp.n_actions).transpose();
    p.tables.push_back(t);
  }
  return p;
}

long deterministic_table_size(const MemorySpace& sp) {
  long n = 0;
  for (int h = 1; h <= sp.horizon; ++h) n += sp.zbar_size(h);
  return n;
}

MMemoryPolicy deterministic_policy(const MemorySpace& sp, const std::vector<int>& actions_flat) {
  if (static_cast<long>(actions_flat.size()) != deterministic_table_size(sp))
    throw ConfigError("deterministic policy: wrong number of actions");
  MMemoryPolicy p{sp, {}};
  size_t k = 0;
  for (int h = 1; h <= sp.horizon; ++h) {
    Mat t = Mat::Zero(sp.zbar_size(h), sp.n_actions);
    for (long i = 0; i < t.rows(); ++i) t(i, actions_flat[k++]) = 1.0;
    p.tables.push_back(t);
  }
  return p;
}

PolicyClass sample_deterministic_policies(const MemorySpace& sp, int n, Rng& rng) {
  long N = deterministic_table_size(sp);
  long total = ipow(sp.n_actions, static_cast<int>(N));
  PolicyClass out;
  if (total > 0 && total <= n) {
    std::vector<int> flat(N, 0);
    for (long k = 0; k < total; ++k) {
      out.push_back(deterministic_policy(sp, flat));
      for (long i = N - 1; i >= 0; --i) {
        if (++flat[i] < sp.n_actions) break;
        flat[i] = 0;
      }
    }
    return out;
  }
  std::set<std::vector<int>> seen;
  while (static_cast<int>(out.size()) < n) {
    std::vector<int> flat(N);
    for (auto& x : flat) x = rng.uniform_int(sp.n_actions);
    if (seen.insert(flat).second) out.push_back(deterministic_policy(sp, flat));
  }
  return out;
}

Belief belief_bayes(const Belief& b, int o, const TabularPomdp& m) {
  Belief out = b.cwiseProduct(m.emission.col(o));
  double z = out.sum();
  if (!(z > 0.0)) throw ImpossibleObservation("observation has zero probability under the belief");
  return out / z;
}

Belief belief_transit(const Belief& b, int a, const TabularPomdp& m) { return m.transition[a].transpose() * b; }

Belief belief_update(const Belief& b, int a, int o, const TabularPomdp& m) {
  return belief_bayes(belief_transit(b, a, m), o, m);
}

double d2_divergence(const Belief& b, const Belief& bp) {
  double acc = 0.0;
  for (int s = 0; s < b.size(); ++s) {
    if (b[s] <= 0.0) continue;
    if (bp[s] <= 0.0) return std::numeric_limits<double>::infinity();
    acc += b[s] * b[s] / bp[s];
  }
  return std::max(0.0, std::log(acc));
}

namespace {

void check_compatible(const TabularPomdp& m, const MMemoryPolicy& pi) {
  if (pi.space.n_obs != m.n_obs || pi.space.n_actions != m.n_actions || pi.space.horizon != m.horizon ||
      static_cast<int>(pi.tables.size()) != m.horizon)
    throw ConfigError("policy and model dimensions differ");
}

}  // namespace

Episode sample_episode(const TabularPomdp& m, const MMemoryPolicy& pi, Rng& rng) {
  check_compatible(m, pi);
  Episode ep;
  int s = rng.categorical(m.init_belief, m.n_states);
  long z = 0;
  for (int h = 1; h <= m.horizon; ++h) {
    int o = rng.categorical(m.emission.row(s), m.n_obs);
    int a = rng.categorical(pi.table(h).row(pi.space.zbar(z, o)), m.n_actions);
    ep.s.push_back(s);
    ep.o.push_back(o);
    ep.a.push_back(a);
    ep.r.push_back(m.reward(o, a));
    z = pi.space.append(h, z, o, a);
    s = rng.categorical(m.transition[a].row(s), m.n_states);
  }
  return ep;
}

long history_index_cap() { return 1L << 40; }

long history_size(const TabularPomdp& m, int h) {
  long p = ipow(static_cast<long>(m.n_obs) * m.n_actions, h - 1);
  if (p < 0 || p > history_index_cap() / m.n_obs) return -1;
  return p * m.n_obs;
}

Dataset collect_tuples(const TabularPomdp& m, const MMemoryPolicy& roll_in, int h, int n, SwitchMode sw, Rng& rng,
                       int K) {
  check_compatible(m, roll_in);
  if (h < 1 || h > m.horizon) throw ConfigError("collect_tuples: step out of range");
  if (n <= 0) throw ConfigError("collect_tuples: empty dataset requested");
  if (K < 1) throw ConfigError("collect_tuples: K must be >= 1");
  const MemorySpace& sp = roll_in.space;
  int switch_step = sw == SwitchMode::UniformAtH ? h : std::max(h - sp.memory, 1);
  bool track_hist = history_size(m, h) > 0;
  int last = std::min(h + K, m.horizon);
  Dataset d;
  d.h = h;
  d.K = K;
  d.collector = sw == SwitchMode::UniformAtH ? "uniform-at-h" : "uniform-from-Mh";
  d.tuples.reserve(n);
  for (int i = 0; i < n; ++i) {
    Tuple tp;
    tp.obs.assign(K + 1, m.sentinel_obs());
    tp.acts.assign(K, -1);
    int s = rng.categorical(m.init_belief, m.n_states);
    long z = 0;
    long hist = 0;
    for (int j = 1; j <= last; ++j) {
      int o = rng.categorical(m.emission.row(s), m.n_obs);
      if (j == h) {
        tp.z = z;
        tp.hist = track_hist ? hist * m.n_obs + o : -1;
      }
      if (j >= h) tp.obs[j - h] = o;
      if (j == h + K) break;
      int a;
      if (j < switch_step)
        a = rng.categorical(roll_in.table(j).row(sp.zbar(z, o)), m.n_actions);
      else
        a = rng.uniform_int(m.n_actions);
      if (j >= h) tp.acts[j - h] = a;
      if (j == h) tp.r = m.reward(o, a);
      if (j < h) {
        z = sp.append(j, z, o, a);
        hist = hist * sp.pairs() + static_cast<long>(o) * m.n_actions + a;
      }
      s = rng.categorical(m.transition[a].row(s), m.n_states);
    }
    d.tuples.push_back(std::move(tp));
  }
  return d;
}

Dataset collect_initial(const TabularPomdp& m, int n, Rng& rng, int K) {
  MemorySpace sp(m, 0);
  Dataset d = collect_tuples(m, uniform_policy(sp), 1, n, SwitchMode::UniformAtH, rng, K);
  d.collector = "initial";
  return d;
}

CountedDataset compress(const Dataset& d) {
  std::map<std::vector<long>, long> counts;
  std::map<std::vector<long>, size_t> first;
  for (size_t i = 0; i < d.tuples.size(); ++i) {
    const Tuple& t = d.tuples[i];
    std::vector<long> key;
    key.reserve(2 + t.obs.size() + t.acts.size());
    key.push_back(t.z);
    for (int o : t.obs) key.push_back(o);
    for (int a : t.acts) key.push_back(a);
    key.push_back(t.hist);
    if (counts[key]++ == 0) first[key] = i;
  }
  CountedDataset c;
  c.h = d.h;
  c.K = d.K;
  c.m = static_cast<long>(d.tuples.size());
  for (auto& [key, cnt] : counts) {
    c.cells.push_back(d.tuples[first[key]]);
    c.count.push_back(cnt);
    c.weight.push_back(static_cast<double>(cnt) / c.m);
  }
  return c;
}

long memory_cap() { return 1L << 22; }

ValueTable exact_value_function(const TabularPomdp& m, const MMemoryPolicy& pi) {
  check_compatible(m, pi);
  const MemorySpace& sp = pi.space;
  const int S = m.n_states, O = m.n_obs, A = m.n_actions, H = m.horizon;
  for (int h = 1; h <= H; ++h)
    if (sp.z_size(h) * S > memory_cap()) throw ResourceError("value table exceeds memory cap");
  ValueTable vt;
  vt.V.resize(H);
  Mat next;  // V_{h+1}
  Vec cont(S);
  for (int h = H; h >= 1; --h) {
    Mat cur = Mat::Zero(sp.z_size(h), S);
    const Mat& tab = pi.table(h);
    for (long z = 0; z < cur.rows(); ++z) {
      for (int o = 0; o < O; ++o) {
        long zb = sp.zbar(z, o);
        for (int a = 0; a < A; ++a) {
          double p = tab(zb, a);
          if (p == 0.0) continue;
          if (h < H)
            cont.noalias() = m.transition[a] * next.row(sp.append(h, z, o, a)).transpose();
          else
            cont.setZero();
          for (int s = 0; s < S; ++s) cur(z, s) += m.emission(s, o) * p * (m.reward(o, a) + cont[s]);
        }
      }
    }
    vt.V[h - 1] = cur;
    next = std::move(cur);
  }
  return vt;
}

std::vector<Mat> occupancy(const TabularPomdp& m, const MMemoryPolicy& pi) {
  check_compatible(m, pi);
  const MemorySpace& sp = pi.space;
  std::vector<Mat> X(m.horizon);
  X[0] = Mat::Zero(1, m.n_states);
  X[0].row(0) = m.init_belief.transpose();
  for (int h = 1; h < m.horizon; ++h) {
    if (sp.z_size(h + 1) * m.n_states > memory_cap()) throw ResourceError("occupancy exceeds memory cap");
    Mat nxt = Mat::Zero(sp.z_size(h + 1), m.n_states);
    const Mat& cur = X[h - 1];
    for (long z = 0; z < cur.rows(); ++z)
      for (int o = 0; o < m.n_obs; ++o) {
        Vec ao = cur.row(z).transpose().cwiseProduct(m.emission.col(o));
        if (ao.sum() == 0.0) continue;
        for (int a = 0; a < m.n_actions; ++a) {
          double p = pi.prob(h, sp.zbar(z, o), a);
          if (p == 0.0) continue;
          nxt.row(sp.append(h, z, o, a)) += p * (m.transition[a].transpose() * ao).transpose();
        }
      }
    X[h] = nxt;
  }
  return X;
}

double exact_policy_value(const TabularPomdp& m, const MMemoryPolicy& pi) {
  ValueTable vt = exact_value_function(m, pi);
  return vt.at(1).row(0).dot(m.init_belief);
}

std::pair<int, double> best_in_class(const TabularPomdp& m, const PolicyClass& cls) {
  if (cls.empty()) throw ConfigError("best_in_class: empty policy class");
  int best = 0;
  double bv = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < cls.size(); ++i) {
    double v = exact_policy_value(m, cls[i]);
    if (v > bv) {
      bv = v;
      best = static_cast<int>(i);
    }
  }
  return {best, bv};
}

namespace {

// Full-history backward induction. alpha(s) = P(history, s_h). When tables is
// non-null the maximising action (lowest index on ties) of every reached node is
// recorded, indexed by the full-history memory of sp.
double tree_optimum(const TabularPomdp& m, int h, long z, const Vec& alpha, const MemorySpace* sp,
                    std::vector<Mat>* tables) {
  if (h > m.horizon) return 0.0;
  double total = 0.0;
  for (int o = 0; o < m.n_obs; ++o) {
    Vec ao = alpha.cwiseProduct(m.emission.col(o));
    double mass = ao.sum();
    if (mass <= 0.0) continue;
    double best = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int a = 0; a < m.n_actions; ++a) {
      long z2 = sp ? sp->append(h, z, o, a) : 0;
      double v = mass * m.reward(o, a);
      if (h < m.horizon) v += tree_optimum(m, h + 1, z2, m.transition[a].transpose() * ao, sp, tables);
      if (v > best) {
        best = v;
        arg = a;
      }
    }
    if (tables) {
      Mat& t = (*tables)[h - 1];
      long zb = sp->zbar(z, o);
      t.row(zb).setZero();
      t(zb, arg) = 1.0;
    }
    total += best;
  }
  return total;
}

}  // namespace

double global_optimal_value(const TabularPomdp& m, long node_cap) {
  long nodes = ipow(static_cast<long>(m.n_obs) * m.n_actions, m.horizon);
  if (nodes < 0 || nodes > node_cap) throw ResourceError("full-history tree exceeds node cap");
  return tree_optimum(m, 1, 0, m.init_belief, nullptr, nullptr);
}

MemoryOptimum best_memory_policy(const TabularPomdp& m, int M, long enum_cap) {
  MemorySpace sp(m, M);
  MemoryOptimum out;
  if (M >= m.horizon - 1) {
    std::vector<int> zeros(deterministic_table_size(sp), 0);
    MMemoryPolicy pi = deterministic_policy(sp, zeros);
    tree_optimum(m, 1, 0, m.init_belief, &sp, &pi.tables);
    out.policy = pi;
    out.value = exact_policy_value(m, pi);
    out.policies_searched = 1;
    return out;
  }
  long N = deterministic_table_size(sp);
  long total = ipow(m.n_actions, static_cast<int>(N));
  if (total < 0 || total > enum_cap) throw ResourceError("deterministic policy class exceeds enumeration cap");
  std::vector<int> flat(N, 0);
  MMemoryPolicy pi = deterministic_policy(sp, flat);
  // Row offsets so that the odometer can flip single table entries in place.
  std::vector<std::pair<int, long>> where;
  for (int h = 1; h <= m.horizon; ++h)
    for (long i = 0; i < sp.zbar_size(h); ++i) where.push_back({h - 1, i});
  out.value = -std::numeric_limits<double>::infinity();
  for (long k = 0; k < total; ++k) {
    double v = exact_policy_value(m, pi);
    if (v > out.value) {
      out.value = v;
      out.policy = pi;
    }
    for (long i = N - 1; i >= 0; --i) {
      auto [t, row] = where[i];
      pi.tables[t](row, flat[i]) = 0.0;
      bool carry = ++flat[i] == m.n_actions;
      if (carry) flat[i] = 0;
      pi.tables[t](row, flat[i]) = 1.0;
      if (!carry) break;
    }
  }
  out.policies_searched = total;
  return out;
}

}  // namespace pobilin
