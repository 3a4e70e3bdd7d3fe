#include "pobilin/learner.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

namespace pobilin {

double loss_plain(const Tuple& tp, int h, const MMemoryPolicy& pi, const LinkFunction& g) {
  const MemorySpace& sp = pi.space;
  double w = sp.n_actions * pi.prob(h, sp.zbar(tp.z, tp.o()), tp.a());
  double next = 0.0;
  if (h < sp.horizon && w != 0.0)
    next = g.eval(h + 1, sp.append(h, tp.z, tp.o(), tp.a()), tp.obs.data() + 1, tp.acts.data() + 1);
  return w * (next + tp.r) - g.eval(h, tp.z, tp.obs.data(), tp.acts.data());
}

LossStats loss_stats(const Dataset& d, const MMemoryPolicy& pi, const LinkFunction& g) {
  if (d.tuples.empty()) throw ConfigError("empty dataset");
  double s = 0.0, s2 = 0.0;
  for (const Tuple& tp : d.tuples) {
    double l = loss_plain(tp, d.h, pi, g);
    s += l;
    s2 += l * l;
  }
  double n = static_cast<double>(d.tuples.size());
  LossStats st;
  st.mean = s / n;
  double var = n > 1 ? std::max(0.0, (s2 - n * st.mean * st.mean) / (n - 1)) : 0.0;
  st.se = std::sqrt(var / n);
  return st;
}

double sigma_estimate(const Dataset& d, const MMemoryPolicy& pi, const LinkFunction& g) {
  return loss_stats(d, pi, g).mean;
}

namespace {

// Sum over uniform-action futures of length k from the unnormalised state vector beta,
// of mass * g_h(z, key).
double future_expectation(const TabularPomdp& m, const LinkFunction& g, int h, long z, const Vec& beta) {
  if (h > m.horizon) return 0.0;
  const int k = g.future_len(h), O = m.n_obs, A = m.n_actions;
  double acc = 0.0;
  std::function<void(int, long, const Vec&)> rec = [&](int j, long key, const Vec& b) {
    for (int o = 0; o < O; ++o) {
      Vec bo = b.cwiseProduct(m.emission.col(o));
      double mass = bo.sum();
      if (mass == 0.0) continue;
      long k2 = j == 0 ? o : key * O + o;
      if (j == k - 1) {
        acc += mass * g.at(h, z, k2);
        continue;
      }
      for (int a = 0; a < A; ++a) rec(j + 1, k2 * A + a, m.transition[a].transpose() * bo / A);
    }
  };
  rec(0, 0, beta);
  return acc;
}

void require_same_memory(const MMemoryPolicy& a, const MMemoryPolicy& b) {
  if (a.space.memory != b.space.memory) throw ConfigError("roll-in and evaluated policy must share the memory length");
}

}  // namespace

double brute_bellman_error(const TabularPomdp& m, const MMemoryPolicy& roll_in, const MMemoryPolicy& pi,
                           const LinkFunction& g, int h, long node_cap) {
  if (h < 1 || h > m.horizon) throw ConfigError("brute_bellman_error: step out of range");
  double nodes = std::pow(static_cast<double>(m.n_obs) * m.n_actions, h - 1 + g.K);
  if (nodes > static_cast<double>(node_cap)) throw ResourceError("sequence enumeration exceeds cap");
  const MemorySpace& sr = roll_in.space;
  const MemorySpace& sp = pi.space;
  double total = 0.0;
  std::function<void(int, long, long, const Vec&)> rollin = [&](int j, long zr, long z, const Vec& alpha) {
    if (j == h) {
      double e1 = future_expectation(m, g, h, z, alpha);
      double e2 = 0.0;
      for (int o = 0; o < m.n_obs; ++o) {
        Vec ao = alpha.cwiseProduct(m.emission.col(o));
        double mass = ao.sum();
        if (mass == 0.0) continue;
        for (int a = 0; a < m.n_actions; ++a) {
          double p = pi.prob(h, sp.zbar(z, o), a);
          if (p == 0.0) continue;
          e2 += p * mass * m.reward(o, a);
          if (h < m.horizon)
            e2 += future_expectation(m, g, h + 1, sp.append(h, z, o, a), p * (m.transition[a].transpose() * ao));
        }
      }
      total += e1 - e2;
      return;
    }
    for (int o = 0; o < m.n_obs; ++o) {
      Vec ao = alpha.cwiseProduct(m.emission.col(o));
      if (ao.sum() == 0.0) continue;
      for (int a = 0; a < m.n_actions; ++a) {
        double p = roll_in.prob(j, sr.zbar(zr, o), a);
        if (p == 0.0) continue;
        rollin(j + 1, sr.append(j, zr, o, a), sp.append(j, z, o, a), p * (m.transition[a].transpose() * ao));
      }
    }
  };
  rollin(1, 0, 0, m.init_belief);
  return total;
}

namespace {

// Conditional expectation of a link table over uniform futures: (z, s) -> E[g_h(z, future) | s].
Mat link_conditional(const TabularPomdp& m, const Mat& theta, int k, std::vector<Mat>& cache) {
  if (static_cast<int>(cache.size()) <= k) cache.resize(k + 1);
  if (cache[k].size() == 0) cache[k] = build_OK_matrix(m, k);
  return theta * cache[k];
}

}  // namespace

Vec bilinear_W(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g, int h,
               const LinkFunction& g_star) {
  const MemorySpace& sp = pi.space;
  const int S = m.n_states;
  std::vector<Mat> cache;
  Mat C = link_conditional(m, g.theta[h - 1] - g_star.theta[h - 1], g.future_len(h), cache);
  Mat W = C;
  if (h < m.horizon) {
    Mat D = link_conditional(m, g.theta[h] - g_star.theta[h], g.future_len(h + 1), cache);
    for (long z = 0; z < W.rows(); ++z)
      for (int o = 0; o < m.n_obs; ++o)
        for (int a = 0; a < m.n_actions; ++a) {
          double p = pi.prob(h, sp.zbar(z, o), a);
          if (p == 0.0) continue;
          Vec nxt = m.transition[a] * D.row(sp.append(h, z, o, a)).transpose();
          for (int s = 0; s < S; ++s) W(z, s) -= m.emission(s, o) * p * nxt[s];
        }
  }
  Vec out(W.size());
  for (long z = 0; z < W.rows(); ++z)
    for (int s = 0; s < S; ++s) out[z * S + s] = W(z, s);
  return out;
}

BilinearCertificate bilinear_decompose_tabular(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g,
                                               const MMemoryPolicy& roll_in, int h) {
  require_same_memory(pi, roll_in);
  LinkFunction g_star = construct_link_multistep(m, pi, g.K);
  BilinearCertificate c;
  c.h = h;
  c.W = bilinear_W(m, pi, g, h, g_star);
  Mat X = occupancy(m, roll_in)[h - 1];
  c.X.resize(X.size());
  for (long z = 0; z < X.rows(); ++z)
    for (int s = 0; s < m.n_states; ++s) c.X[z * m.n_states + s] = X(z, s);
  c.inner = c.W.dot(c.X);
  c.bellman = brute_bellman_error(m, roll_in, pi, g, h);
  return c;
}

EllipticalReport elliptical_diagnostics(const std::vector<std::vector<Vec>>& X, double lambda, double B_X) {
  if (!(lambda > 0.0)) throw ConfigError("elliptical_diagnostics: lambda must be positive");
  EllipticalReport rep;
  rep.B_X = B_X;
  const int T = static_cast<int>(X.size());
  if (T == 0) return rep;
  const int H = static_cast<int>(X[0].size());
  rep.norms.assign(T, std::vector<double>(H, 0.0));
  for (int h = 0; h < H; ++h) {
    const int d = static_cast<int>(X[0][h].size());
    rep.d = std::max(rep.d, d);
    Mat Sigma = lambda * Mat::Identity(d, d);
    for (int t = 0; t < T; ++t) {
      const Vec& x = X[t][h];
      Eigen::LDLT<Mat> ldlt(Sigma);
      rep.norms[t][h] = std::sqrt(std::max(0.0, x.dot(ldlt.solve(x))));
      Sigma.noalias() += x * x.transpose();
    }
  }
  double s = 0.0;
  for (const auto& row : rep.norms)
    for (double v : row) s += v;
  rep.lhs = s / T;
  rep.rhs = H * std::sqrt(static_cast<double>(rep.d) / T *
                          std::log(1.0 + T * B_X * B_X / (rep.d * lambda)));
  return rep;
}

int compute_iteration_budget(int H, int d, double B_X, double B_W, double eps_gen) {
  if (H < 1 || d < 1 || !(eps_gen > 0.0)) throw ConfigError("iteration budget: invalid inputs");
  double hd = static_cast<double>(H) * d;
  double t = 2.0 * hd * std::log(4.0 * hd * (B_X * B_X * B_W * B_W / (eps_gen * eps_gen) + 1.0));
  return std::max(1, static_cast<int>(std::ceil(t)));
}

void LearnerConfig::validate() const {
  if (T < 1 || m < 1) throw ConfigError("learner: T and m must be >= 1");
  if (!(R >= 0.0)) throw ConfigError("learner: R must be >= 0");
  if (!(lambda > 0.0)) throw ConfigError("learner: lambda must be > 0");
  if (K < 1) throw ConfigError("learner: K must be >= 1");
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Per-cell quantities shared by every (pi, g) pair on one dataset.
struct CellTable {
  Mat Pw;  // |Pi| x C, |A| pi(a | zbar)
  Mat Gc;  // |G| x C, g_h at the cell
  Mat Gn;  // |G| x C, g_{h+1} at the successor
  Vec w;   // empirical weights
  Vec r;
};

CellTable cell_table(const CountedDataset& cd, const PolicyClass& cls, const LinkClass& links) {
  const int h = cd.h;
  const long C = static_cast<long>(cd.cells.size());
  const MemorySpace& sp = cls[0].space;
  CellTable ct;
  ct.Pw.resize(cls.size(), C);
  ct.Gc.resize(links.links.size(), C);
  ct.Gn = Mat::Zero(links.links.size(), C);
  ct.w.resize(C);
  ct.r.resize(C);
  for (long c = 0; c < C; ++c) {
    const Tuple& tp = cd.cells[c];
    ct.w[c] = cd.weight[c];
    ct.r[c] = tp.r;
    long zb = sp.zbar(tp.z, tp.o());
    for (size_t i = 0; i < cls.size(); ++i) ct.Pw(i, c) = sp.n_actions * cls[i].prob(h, zb, tp.a());
    long z2 = h < sp.horizon ? sp.append(h, tp.z, tp.o(), tp.a()) : 0;
    for (size_t j = 0; j < links.links.size(); ++j) {
      const LinkFunction& g = links.links[j];
      ct.Gc(j, c) = g.eval(h, tp.z, tp.obs.data(), tp.acts.data());
      if (h < sp.horizon) ct.Gn(j, c) = g.eval(h + 1, z2, tp.obs.data() + 1, tp.acts.data() + 1);
    }
  }
  return ct;
}

Mat sigma_matrix_plain(const CellTable& ct) {
  Mat S = ct.Pw * ct.w.asDiagonal() * ct.Gn.transpose();
  Vec pr = ct.Pw * ct.w.cwiseProduct(ct.r);
  Vec gc = ct.Gc * ct.w;
  S.colwise() += pr;
  S.rowwise() -= gc.transpose();
  return S;
}

// sigma_ij = max_f E_D[|A| pi f (g_h - r - g_{h+1}) - f^2 / 2]; rows outside `rows` are left at +inf.
Mat sigma_matrix_dis(const CellTable& ct, const Mat& F, const std::vector<char>& rows) {
  const long nP = ct.Pw.rows(), nG = ct.Gc.rows();
  Mat S = Mat::Constant(nP, nG, std::numeric_limits<double>::infinity());
  Mat Dg = (ct.Gc - ct.Gn).transpose();  // C x |G|
  Vec quad = 0.5 * (F.array().square().matrix() * ct.w);
  for (long i = 0; i < nP; ++i) {
    if (!rows[i]) continue;
    Vec wi = ct.w.cwiseProduct(ct.Pw.row(i).transpose());
    Mat Y = F * wi.asDiagonal();
    Mat val = Y * Dg;
    Vec lin = Y * ct.r + quad;
    val.colwise() -= lin;
    S.row(i) = val.colwise().maxCoeff().cwiseAbs();
  }
  return S;
}

Mat disc_matrix(const CountedDataset& cd, const DiscriminatorClass& F, const MemorySpace& sp) {
  const auto& fs = F.per_h[cd.h - 1];
  Mat out(fs.size(), cd.cells.size());
  for (size_t k = 0; k < fs.size(); ++k)
    for (size_t c = 0; c < cd.cells.size(); ++c) out(k, c) = F.value(cd.h, static_cast<int>(k), cd.cells[c], sp);
  return out;
}

double expected_initial(const TabularPomdp& m, const LinkFunction& g, const Mat& OK) {
  return (g.theta[0].row(0) * OK).dot(m.init_belief.transpose());
}

struct RunCore {
  const TabularPomdp& m;
  const PolicyClass& cls;
  const LinkClass& links;
  const LearnerConfig& cfg;
  const DiscriminatorClass* F = nullptr;
};

RunResult run_loop(const RunCore& rc) {
  const TabularPomdp& m = rc.m;
  const PolicyClass& cls = rc.cls;
  const LinkClass& links = rc.links;
  const LearnerConfig& cfg = rc.cfg;
  cfg.validate();
  if (cls.empty() || links.links.empty()) throw ConfigError("learner: empty policy or link class");
  const bool dis = rc.F != nullptr;
  const int H = m.horizon;
  const long nP = static_cast<long>(cls.size()), nG = static_cast<long>(links.links.size());
  const MemorySpace& sp = cls[0].space;
  for (const auto& p : cls)
    if (p.space.memory != sp.memory) throw ConfigError("learner: policies must share the memory length");
  const int K = dis ? 1 : cfg.K;
  for (const auto& g : links.links)
    if (g.K != K) throw ConfigError("learner: link future length differs from the configured K");

  RunResult res;
  res.R = cfg.R;

  long m0 = cfg.m0 > 0 ? cfg.m0 : cfg.m;
  Rng r0 = Rng::substream(cfg.seed, 0, 0, 1);
  CountedDataset d0 = compress(collect_initial(m, static_cast<int>(m0), r0, K));
  Vec obj = Vec::Zero(nG);
  for (size_t c = 0; c < d0.cells.size(); ++c)
    for (long j = 0; j < nG; ++j)
      obj[j] += d0.weight[c] * links.links[j].eval(1, 0, d0.cells[c].obs.data(), d0.cells[c].acts.data());

  std::map<int, double> J;
  auto value_of = [&](int i) {
    auto it = J.find(i);
    if (it != J.end()) return it->second;
    double v = exact_policy_value(m, cls[i]);
    J[i] = v;
    return v;
  };
  if (cfg.oracle) {
    auto [bi, bv] = best_in_class(m, cls);
    res.star_policy = bi;
    res.J_star = bv;
    if (!links.policy_link.empty()) res.star_link = links.policy_link[bi];
    Mat OK = build_OK_matrix(m, std::min(K, H));
    for (long j = 0; j < nG; ++j)
      res.eps_ini = std::max(res.eps_ini, std::abs(obj[j] - expected_initial(m, links.links[j], OK)));
  }

  Eigen::Array<char, Eigen::Dynamic, Eigen::Dynamic> feasible =
      Eigen::Array<char, Eigen::Dynamic, Eigen::Dynamic>::Constant(nP, nG, 1);
  Mat runmax = Mat::Zero(nP, nG);
  int rollin = cfg.initial_policy;
  const SwitchMode sw = dis ? SwitchMode::UniformFromMh : SwitchMode::UniformAtH;
  std::vector<Mat> Fmats;

  for (int t = 0; t < cfg.T; ++t) {
    TraceRow row;
    row.t = t + 1;
    row.sigma_chosen.assign(H, std::numeric_limits<double>::quiet_NaN());
    row.sigma_star.assign(H, std::numeric_limits<double>::quiet_NaN());
    row.sigma_max.assign(H, std::numeric_limits<double>::quiet_NaN());
    std::vector<Mat> sig(H);
    if (t >= 1) {
      row.rollin_policy = rollin;
      std::vector<CountedDataset> data(H);
      parallel_for(H, [&](int hi) {
        Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(hi + 1));
        data[hi] = compress(collect_tuples(m, cls[rollin], hi + 1, static_cast<int>(cfg.m), sw, rng, K));
      });
      std::vector<char> live(nP, 0);
      for (long i = 0; i < nP; ++i) live[i] = feasible.row(i).any() || i == res.star_policy;
      for (int h = 1; h <= H; ++h) {
        CellTable ct = cell_table(data[h - 1], cls, links);
        Mat S = dis ? sigma_matrix_dis(ct, disc_matrix(data[h - 1], *rc.F, sp), live) : sigma_matrix_plain(ct);
        Mat cons = dis ? S : Mat(S.array().square().matrix());
        double smax = -std::numeric_limits<double>::infinity();
        for (long i = 0; i < nP; ++i) {
          if (!live[i]) continue;
          for (long j = 0; j < nG; ++j) {
            if (feasible(i, j)) smax = std::max(smax, std::abs(S(i, j)));
            runmax(i, j) = std::max(runmax(i, j), cons(i, j));
            if (cons(i, j) > cfg.R) feasible(i, j) = 0;
          }
        }
        row.sigma_max[h - 1] = smax;
        if (res.star_policy >= 0 && res.star_link >= 0) row.sigma_star[h - 1] = S(res.star_policy, res.star_link);
        sig[h - 1] = std::move(S);
      }
    }
    int bi = -1, bj = -1;
    double best = -std::numeric_limits<double>::infinity();
    long nf = 0;
    for (long i = 0; i < nP; ++i)
      for (long j = 0; j < nG; ++j) {
        if (!feasible(i, j)) continue;
        ++nf;
        if (obj[j] > best) {
          best = obj[j];
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    if (bi < 0) {
      double rmin = std::numeric_limits<double>::infinity();
      for (long i = 0; i < nP; ++i)
        for (long j = 0; j < nG; ++j) rmin = std::min(rmin, runmax(i, j));
      std::ostringstream os;
      os << "no feasible (policy, link) pair at iteration " << t + 1 << "; smallest admissible radius " << rmin;
      throw InfeasibleConstraint(os.str(), t + 1, rmin);
    }
    row.policy = bi;
    row.link = bj;
    row.objective = best;
    row.n_feasible = nf;
    if (t >= 1)
      for (int h = 1; h <= H; ++h) row.sigma_chosen[h - 1] = sig[h - 1](bi, bj);
    if (res.star_policy >= 0 && res.star_link >= 0) {
      row.star_feasible = feasible(res.star_policy, res.star_link) != 0;
      if (!row.star_feasible) res.star_always_feasible = false;
      for (double v : row.sigma_star)
        if (!std::isnan(v)) res.star_sigma_max = std::max(res.star_sigma_max, std::abs(v));
    }
    if (cfg.oracle) {
      row.J = value_of(bi);
      if (row.star_feasible && row.objective + 2.0 * res.eps_ini < res.J_star - 1e-12) res.optimism_holds = false;
    }
    rollin = bi;
    res.trace.push_back(std::move(row));
  }

  Rng pick = Rng::substream(cfg.seed, 0xffffffffULL, 7, 7);
  res.selected_t = 1 + pick.uniform_int(cfg.T);
  res.policy = res.trace[res.selected_t - 1].policy;
  if (cfg.oracle) {
    res.J_hat = value_of(res.policy);
    res.J_best_iterate = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<Vec>> X;
    double bx = 0.0;
    std::map<int, std::vector<Vec>> occ_cache;
    for (const auto& row : res.trace) {
      if (row.J > res.J_best_iterate) {
        res.J_best_iterate = row.J;
        res.best_iterate_policy = row.policy;
      }
      auto it = occ_cache.find(row.policy);
      if (it == occ_cache.end()) {
        std::vector<Mat> occ = occupancy(m, cls[row.policy]);
        std::vector<Vec> flat;
        for (const Mat& x : occ) {
          Vec v(x.size());
          for (long z = 0; z < x.rows(); ++z)
            for (long s = 0; s < x.cols(); ++s) v[z * x.cols() + s] = x(z, s);
          flat.push_back(v);
        }
        it = occ_cache.emplace(row.policy, flat).first;
      }
      for (const Vec& v : it->second) bx = std::max(bx, v.norm());
      X.push_back(it->second);
    }
    res.elliptical = elliptical_diagnostics(X, cfg.lambda, bx);
  }
  return res;
}

}  // namespace

RunResult provable_run(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                       const LearnerConfig& cfg) {
  if (cfg.mode == LearnerMode::Discriminator) throw ConfigError("provable_run: use provable_dis_run for discriminators");
  if (cfg.mode == LearnerMode::Plain && cfg.K != 1) throw ConfigError("provable_run: plain mode requires K = 1");
  return run_loop(RunCore{m, cls, links, cfg, nullptr});
}

RunResult provable_dis_run(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                           const DiscriminatorClass& F, const LearnerConfig& cfg) {
  if (static_cast<int>(F.per_h.size()) != m.horizon) throw ConfigError("discriminator class needs one list per step");
  for (const auto& fs : F.per_h)
    if (fs.empty()) throw ConfigError("discriminator class has an empty step");
  return run_loop(RunCore{m, cls, links, cfg, &F});
}

double DiscriminatorClass::value(int h, int k, const Tuple& tp, const MemorySpace& sp) const {
  const Vec& f = per_h[h - 1][k];
  if (domain == Domain::Memory) return f[sp.zbar(tp.z, tp.o())];
  if (tp.hist < 0) throw ResourceError("history discriminator needs enumerable histories");
  return f[tp.hist];
}

double loss_discriminator(const Tuple& tp, int h, double f, const MMemoryPolicy& pi, const LinkFunction& g) {
  const MemorySpace& sp = pi.space;
  double w = sp.n_actions * pi.prob(h, sp.zbar(tp.z, tp.o()), tp.a());
  double next = h < sp.horizon ? g.eval(h + 1, sp.append(h, tp.z, tp.o(), tp.a()), tp.obs.data() + 1,
                                        tp.acts.data() + 1)
                               : 0.0;
  double resid = g.eval(h, tp.z, tp.obs.data(), tp.acts.data()) - tp.r - next;
  return w * f * resid - 0.5 * f * f;
}

double sigma_discriminator(const Dataset& d, const MMemoryPolicy& pi, const LinkFunction& g,
                           const DiscriminatorClass& F) {
  if (d.tuples.empty()) throw ConfigError("empty dataset");
  const auto& fs = F.per_h[d.h - 1];
  if (fs.empty()) throw ConfigError("empty discriminator class");
  // the loss is quadratic in f(x), so the data reduce to per-key sums of the weighted residual
  const long n_keys = fs[0].size();
  Vec lin = Vec::Zero(n_keys), cnt = Vec::Zero(n_keys);
  const MemorySpace& sp = pi.space;
  for (const Tuple& tp : d.tuples) {
    long key;
    if (F.domain == DiscriminatorClass::Domain::Memory) {
      key = sp.zbar(tp.z, tp.o());
    } else {
      if (tp.hist < 0) throw ResourceError("history discriminator needs enumerable histories");
      key = tp.hist;
    }
    if (key >= n_keys) throw ConfigError("discriminator domain does not cover the data");
    lin[key] += loss_discriminator(tp, d.h, 1.0, pi, g) + 0.5;
    cnt[key] += 1.0;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const Vec& f : fs) best = std::max(best, (f.dot(lin) - 0.5 * f.cwiseProduct(f).dot(cnt)) / d.tuples.size());
  return std::abs(best);
}

Vec bellman_backup_decodable(const TabularPomdp& m, const MMemoryPolicy& pi, const LinkFunction& g, int h,
                             const Decoder& dec) {
  if (g.K != 1) throw ConfigError("decodable Bellman backup needs one-step links");
  const MemorySpace& sp = pi.space;
  Vec out = Vec::Zero(sp.zbar_size(h));
  for (long z = 0; z < sp.z_size(h); ++z)
    for (int o = 0; o < m.n_obs; ++o) {
      long zb = sp.zbar(z, o);
      int s = dec.at(h, zb);
      if (s < 0) continue;
      double v = 0.0;
      for (int a = 0; a < m.n_actions; ++a) {
        double p = pi.prob(h, zb, a);
        if (p == 0.0) continue;
        double cont = 0.0;
        if (h < m.horizon) {
          long z2 = sp.append(h, z, o, a);
          Vec next_obs = m.transition[a].row(s) * m.emission;
          cont = next_obs.dot(g.theta[h].row(z2).transpose());
        }
        v += p * (m.reward(o, a) + cont);
      }
      out[zb] = v;
    }
  return out;
}

DiscriminatorClass build_complete_discriminators(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                                                 const Decoder& dec) {
  DiscriminatorClass F;
  F.domain = DiscriminatorClass::Domain::Memory;
  F.per_h.resize(m.horizon);
  for (int h = 1; h <= m.horizon; ++h) {
    const MemorySpace& sp = cls.at(0).space;
    std::map<std::vector<double>, int> seen;
    auto add = [&](const Vec& f) {
      std::vector<double> key(f.data(), f.data() + f.size());
      if (seen.emplace(key, 0).second) F.per_h[h - 1].push_back(f);
    };
    add(Vec::Zero(sp.zbar_size(h)));
    for (const auto& pi : cls)
      for (const auto& g : links.links) {
        Vec gh(sp.zbar_size(h));
        for (long z = 0; z < sp.z_size(h); ++z)
          for (int o = 0; o < m.n_obs; ++o) gh[sp.zbar(z, o)] = g.theta[h - 1](z, o);
        add(gh - bellman_backup_decodable(m, pi, g, h, dec));
      }
  }
  for (const auto& fs : F.per_h)
    for (const auto& f : fs) F.bound = std::max(F.bound, f.cwiseAbs().maxCoeff());
  return F;
}

RadiusCalibration calibrate_radius(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links,
                                   const LearnerConfig& cfg, double slack, int n_rollins,
                                   const DiscriminatorClass* F, int T_union, double delta) {
  if (links.policy_link.size() != cls.size()) throw ConfigError("calibration needs the policy-to-link map");
  const bool dis = F != nullptr;
  const int H = m.horizon;
  const int K = dis ? 1 : cfg.K;
  const long nP = static_cast<long>(cls.size());
  const int nr = std::min<long>(n_rollins, nP);
  const SwitchMode sw = dis ? SwitchMode::UniformFromMh : SwitchMode::UniformAtH;
  RadiusCalibration out;
  std::vector<char> all(nP, 1);
  for (int k = 0; k < nr; ++k) {
    int pol = static_cast<int>((static_cast<long>(k) * nP) / nr);
    for (int h = 1; h <= H; ++h) {
      Rng rng = Rng::substream(cfg.seed ^ 0x5eedca11b7a7eULL, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(h));
      CountedDataset cd = compress(collect_tuples(m, cls[pol], h, static_cast<int>(cfg.m), sw, rng, K));
      CellTable ct = cell_table(cd, cls, links);
      Mat Fm = dis ? disc_matrix(cd, *F, cls[0].space) : Mat();
      Mat S = dis ? sigma_matrix_dis(ct, Fm, all) : sigma_matrix_plain(ct);
      for (long i = 0; i < nP; ++i) {
        int j = links.policy_link[i];
        if (j < 0) continue;
        out.max_sigma = std::max(out.max_sigma, std::abs(S(i, j)));
        // Per-sample spread of the loss behind sigma(pi, g^pi).
        Vec loss(ct.w.size());
        if (dis) {
          double best = -std::numeric_limits<double>::infinity();
          for (long f = 0; f < Fm.rows(); ++f) {
            Vec l = (ct.Pw.row(i).transpose().array() * Fm.row(f).transpose().array() *
                         (ct.Gc.row(j) - ct.Gn.row(j) - ct.r.transpose()).transpose().array() -
                     0.5 * Fm.row(f).transpose().array().square())
                        .matrix();
            double mu = l.dot(ct.w);
            if (mu > best) {
              best = mu;
              loss = l;
            }
          }
        } else {
          loss = (ct.Pw.row(i).transpose().array() * (ct.Gn.row(j).transpose() + ct.r).array() -
                  ct.Gc.row(j).transpose().array())
                     .matrix();
        }
        double mu = loss.dot(ct.w);
        double var = std::max(0.0, loss.array().square().matrix().dot(ct.w) - mu * mu);
        out.max_se = std::max(out.max_se, std::sqrt(var / cfg.m));
      }
    }
  }
  if (T_union > 0) out.z = std::sqrt(2.0 * std::log(2.0 * T_union * H * static_cast<double>(nP) / delta));
  double r = std::max(slack * out.max_sigma, out.z * out.max_se);
  out.R = dis ? r : r * r;
  return out;
}

double theoretical_radius(long n_policies, long n_links, int T, int H, long m, double delta, double c) {
  double e = c * std::sqrt(std::log(static_cast<double>(n_policies) * n_links * T * H / delta) / m);
  return e * e;
}

std::string RunResult::summary_json() const {
  nlohmann::ordered_json j;
  j["policy"] = policy;
  j["selected_t"] = selected_t;
  j["J_hat"] = J_hat;
  j["J_star"] = J_star;
  j["suboptimality"] = J_star - J_hat;
  j["best_iterate_policy"] = best_iterate_policy;
  j["J_best_iterate"] = J_best_iterate;
  j["star_policy"] = star_policy;
  j["star_link"] = star_link;
  j["R"] = R;
  j["eps_ini"] = eps_ini;
  j["optimism_holds"] = optimism_holds;
  j["star_always_feasible"] = star_always_feasible;
  j["star_sigma_max"] = star_sigma_max;
  j["T"] = trace.size();
  j["elliptical"] = {{"lhs", elliptical.lhs}, {"rhs", elliptical.rhs}, {"d", elliptical.d},
                     {"B_X", elliptical.B_X}, {"holds", elliptical.holds()}};
  return j.dump(2);
}

std::string RunResult::trace_csv() const {
  std::ostringstream os;
  os << "t,h,rollin_policy,policy,link,objective,sigma_chosen,sigma_star,sigma_max,star_feasible,n_feasible,J\n";
  for (const auto& r : trace)
    for (size_t h = 0; h < r.sigma_chosen.size(); ++h)
      os << r.t << ',' << h + 1 << ',' << r.rollin_policy << ',' << r.policy << ',' << r.link << ','
         << num(r.objective) << ',' << num(r.sigma_chosen[h]) << ',' << num(r.sigma_star[h]) << ','
         << num(r.sigma_max[h]) << ',' << (r.star_feasible ? 1 : 0) << ',' << r.n_feasible << ',' << num(r.J)
         << '\n';
  return os.str();
}

}  // namespace pobilin
