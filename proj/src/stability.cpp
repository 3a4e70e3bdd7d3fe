#include "pobilin/stability.hpp"

#include "pobilin/linkfn.hpp"

#include <cmath>
#include <limits>

namespace pobilin {

void FactoredTransition::check(const TabularPomdp& m, double tol) const {
  const int S = m.n_states, A = m.n_actions;
  if (phi.rows() != S * A || mu.rows() != S || mu.cols() != phi.cols())
    throw ConfigError("factorization: phi must be (S*A) x d and mu S x d");
  double err = 0.0;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      Vec row = mu * phi.row(s * A + a).transpose();
      err = std::max(err, (row - m.transition[a].row(s).transpose()).cwiseAbs().maxCoeff());
      if (phi.row(s * A + a).norm() > 1.0 + 1e-12) throw ConfigError("factorization: ||phi(s,a)|| exceeds 1");
    }
  if (err > tol) throw ConfigError("factorization is inconsistent with the tabular transition");
}

LowRankBelief lowrank_initial_belief(const TabularPomdp& m, const FactoredTransition& f, const DesignOptions& opt) {
  f.check(m);
  const int A = m.n_actions;
  Mat X = f.phi.transpose();
  LowRankBelief out;
  out.design = g_optimal_design(X, opt);
  out.b0 = Vec::Zero(m.n_states);
  for (size_t i = 0; i < out.design.support.size(); ++i) {
    int idx = out.design.support[i];
    int s = idx / A, a = idx % A;
    out.support.emplace_back(s, a);
    out.b0 += out.design.weights[i] * m.transition[a].row(s).transpose();
  }
  out.b0 /= out.b0.sum();
  return out;
}

double d2_push_sweep(const TabularPomdp& m, const Belief& b0, int n, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    Belief b = rng.dirichlet(m.n_states);
    for (int a = 0; a < m.n_actions; ++a) worst = std::max(worst, d2_divergence(belief_transit(b, a, m), b0));
  }
  return worst;
}

namespace {

Belief bayes_or_keep(const Belief& b, int o, const TabularPomdp& m) {
  try {
    return belief_bayes(b, o, m);
  } catch (const ImpossibleObservation&) {
    return Belief();
  }
}

struct Moments {
  double sum = 0.0, sq = 0.0;
  long n = 0;
  void add(double x) {
    sum += x;
    sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double se() const {
    if (n < 2) return 0.0;
    double mu = mean();
    return std::sqrt(std::max(0.0, (sq / n - mu * mu)) / (n - 1));
  }
};

}  // namespace

ContractionResult contraction_experiment(const TabularPomdp& m, const MMemoryPolicy& pi, const ContractionOptions& opt) {
  const int H = m.horizon;
  if (opt.start_h < 1 || opt.start_h > H) throw ConfigError("contraction: start step out of range");
  if (opt.t_max < 0 || opt.start_h + opt.t_max > H) throw ConfigError("contraction: start + t_max exceeds the horizon");
  if (opt.n_rollouts < 2) throw ConfigError("contraction: need at least two rollouts");
  Mat Oinv = pinv(m.obs_matrix());
  if (numerical_rank(m.obs_matrix()) < m.n_states) throw ObservabilityError("contraction: emission not full column rank", sigma_min(m.obs_matrix()));

  ContractionResult res;
  res.sigma1_l1 = 1.0 / l1_operator_norm(Oinv);
  res.factor = 1.0 - std::pow(res.sigma1_l1, 4) / std::pow(2.0, 40);
  Belief prior = opt.start_h == 1 ? m.init_belief
                 : opt.prior.size() ? opt.prior
                                    : Belief(Vec::Constant(m.n_states, 1.0 / m.n_states));

  const int T = opt.t_max + 1;
  const int n = opt.n_rollouts;
  Mat l1(n, T), pot(n, T);
  parallel_for(n, [&](int i) {
    Rng rng = Rng::substream(opt.seed, 0xc0, static_cast<std::uint64_t>(i));
    Episode ep = sample_episode(m, pi, rng);
    Belief b = belief_bayes(m.init_belief, ep.o[0], m);
    Belief bb;
    for (int h = 1; h <= opt.start_h + opt.t_max; ++h) {
      if (h > 1) b = belief_update(b, ep.a[h - 2], ep.o[h - 1], m);
      if (h == opt.start_h) bb = bayes_or_keep(prior, ep.o[h - 1], m);
      else if (h > opt.start_h && bb.size()) {
        Belief pushed = belief_transit(bb, ep.a[h - 2], m);
        bb = bayes_or_keep(pushed, ep.o[h - 1], m);
      }
      if (h >= opt.start_h) {
        int t = h - opt.start_h;
        if (bb.size() == 0) {
          l1(i, t) = 2.0;
          pot(i, t) = std::numeric_limits<double>::infinity();
        } else {
          l1(i, t) = (b - bb).cwiseAbs().sum();
          double d2 = d2_divergence(b, bb);
          pot(i, t) = std::isinf(d2) ? d2 : std::sqrt(std::max(0.0, std::exp(d2 / 4.0) - 1.0));
        }
      }
    }
  });

  for (int t = 0; t < T; ++t) {
    ContractionRow row;
    row.t = t;
    Moments ml, mp, md, mf;
    for (int i = 0; i < n; ++i) {
      ml.add(l1(i, t));
      if (std::isinf(pot(i, t))) {
        ++row.infinite;
        continue;
      }
      mp.add(pot(i, t));
      if (t > 0 && !std::isinf(pot(i, t - 1))) {
        md.add(pot(i, t) - pot(i, t - 1));
        mf.add(pot(i, t) - res.factor * pot(i, t - 1));
      }
    }
    row.l1_mean = ml.mean();
    row.l1_se = ml.se();
    row.pot_mean = mp.mean();
    row.pot_se = mp.se();
    row.diff_mean = md.mean();
    row.diff_se = md.se();
    row.factor_gap_mean = mf.mean();
    row.factor_gap_se = mf.se();
    if (t > 0) {
      if (row.diff_mean > 3.0 * row.diff_se) res.monotone = false;
      if (row.factor_gap_mean > 3.0 * row.factor_gap_se) res.within_factor = false;
    }
    res.rows.push_back(row);
  }
  return res;
}

int memory_for_epsilon(double sigma1, double X, int H, double eps, double c) {
  if (!(sigma1 > 0.0) || !(eps > 0.0) || X <= 0.0 || H < 1) throw ConfigError("memory_for_epsilon: invalid arguments");
  double v = c * std::pow(sigma1, -4.0) * std::log(X * H / eps);
  return std::max(0, static_cast<int>(std::ceil(v - 1e-12)));
}

}  // namespace pobilin
