#include "pobilin/lqg.hpp"

#include <cmath>

namespace pobilin {

namespace {

bool symmetric(const Mat& X) { return X.rows() == X.cols() && (X - X.transpose()).cwiseAbs().maxCoeff() <= 1e-10; }

double min_eig(const Mat& X) {
  if (X.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(X);
  return es.eigenvalues().minCoeff();
}

void check_psd(const Mat& X, int n, const char* name, bool strict) {
  if (X.rows() != n || X.cols() != n) throw ConfigError(std::string("lqg: ") + name + " has wrong shape");
  if (n == 0) return;
  if (!symmetric(X)) throw ConfigError(std::string("lqg: ") + name + " is not symmetric");
  double e = min_eig(X);
  if (strict ? e <= 0.0 : e < -1e-10) throw ConfigError(std::string("lqg: ") + name + " fails its definiteness requirement");
}

Mat psd_sqrt(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

Vec gaussian(const Mat& root, Rng& rng) {
  Vec e(root.cols());
  for (long i = 0; i < e.size(); ++i) e[i] = rng.normal();
  return root * e;
}

double op_norm(const Mat& X) {
  if (X.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(X);
  return svd.singularValues()[0];
}

// Tail radius at level 1 - 1/n for a centred vector with second moment S.
double tail_radius(const Mat& S, long n) {
  if (S.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  double lmax = std::max(0.0, es.eigenvalues().maxCoeff());
  double tr = std::max(0.0, S.trace());
  return std::sqrt(tr) + std::sqrt(2.0 * std::log(std::max<long>(n, 2))) * std::sqrt(lmax);
}

// Rows of [z; o; a; s'] as a function of x_h = [z_{h-1}; s_h], and the tau loading.
void full_step(const LqgModel& m, const LinearPolicy& pi, int h, Mat& F, Mat& J) {
  const int dz = lqg_z_dim(m, pi.memory, h);
  const int ds = m.ds(), dob = m.d_o(), da = m.da();
  const Mat& U1 = pi.U1[h - 1];
  const Mat& U2 = pi.U2[h - 1];
  F = Mat::Zero(dz + dob + da + ds, dz + ds);
  J = Mat::Zero(F.rows(), dob);
  F.topLeftCorner(dz, dz).setIdentity();
  F.block(dz, dz, dob, ds) = m.C;
  F.block(dz + dob, 0, da, dz) = U2;
  F.block(dz + dob, dz, da, ds) = U1 * m.C;
  F.block(dz + dob + da, 0, ds, dz) = m.B * U2;
  F.block(dz + dob + da, dz, ds, ds) = m.A + m.B * U1 * m.C;
  J.block(dz, 0, dob, dob).setIdentity();
  J.block(dz + dob, 0, da, dob) = U1;
  J.block(dz + dob + da, 0, ds, dob) = m.B * U1;
}

}  // namespace

void LqgModel::validate() const {
  const int n = ds();
  if (n < 1 || da() < 1 || d_o() < 1 || horizon < 1) throw ConfigError("lqg: dimensions and horizon must be positive");
  if (A.cols() != n || B.rows() != n || C.cols() != n) throw ConfigError("lqg: A, B, C shapes are inconsistent");
  if (numerical_rank(C) < n) throw ConfigError("lqg: C is not full column rank");
  check_psd(Q, n, "Q", false);
  check_psd(R, da(), "R", false);
  check_psd(Sigma_eps, n, "Sigma_eps", false);
  check_psd(Sigma_tau, d_o(), "Sigma_tau", false);
  if (Sigma_init.size()) check_psd(Sigma_init, n, "Sigma_init", false);
}

int lqg_z_dim(const LqgModel& m, int memory, int h) { return std::min(h - 1, memory) * (m.d_o() + m.da()); }

LinearPolicy zero_linear_policy(const LqgModel& m, int memory) {
  LinearPolicy pi;
  pi.memory = memory;
  for (int h = 1; h <= m.horizon; ++h) {
    pi.U1.push_back(Mat::Zero(m.da(), m.d_o()));
    pi.U2.push_back(Mat::Zero(m.da(), lqg_z_dim(m, memory, h)));
  }
  return pi;
}

PolicyRegistration register_policy(const LqgModel& m, const LinearPolicy& pi, double gain_bound,
                                   bool enforce_operator_norm) {
  m.validate();
  if (pi.memory < 0) throw ConfigError("lqg policy: negative memory");
  if (static_cast<int>(pi.U1.size()) != m.horizon || static_cast<int>(pi.U2.size()) != m.horizon)
    throw ConfigError("lqg policy: need one gain pair per step");
  PolicyRegistration reg;
  for (int h = 1; h <= m.horizon; ++h) {
    const Mat& U1 = pi.U1[h - 1];
    const Mat& U2 = pi.U2[h - 1];
    if (U1.rows() != m.da() || U1.cols() != m.d_o()) throw ConfigError("lqg policy: U1 has wrong shape");
    if (U2.rows() != m.da() || U2.cols() != lqg_z_dim(m, pi.memory, h))
      throw ConfigError("lqg policy: U2 has wrong shape");
    reg.max_gain_norm = std::max({reg.max_gain_norm, op_norm(U1), op_norm(U2)});
  }
  if (reg.max_gain_norm > gain_bound) throw ConfigError("lqg policy: gain norm exceeds the configured bound");
  for (int h = 1; h < m.horizon; ++h) {
    double nx = op_norm(lqg_xi1(m, pi, h));
    reg.xi_norms.push_back(nx);
    if (enforce_operator_norm && nx > 1.0 + 1e-12)
      throw ConfigError("lqg policy: closed-loop operator norm exceeds 1 at step " + std::to_string(h));
  }
  return reg;
}

Mat lqg_xi1(const LqgModel& m, const LinearPolicy& pi, int h) {
  Mat F, J;
  full_step(m, pi, h, F, J);
  const int keep = lqg_z_dim(m, pi.memory, h + 1) + m.ds();
  return F.bottomRows(keep);
}

Mat lqg_xi2_cov(const LqgModel& m, const LinearPolicy& pi, int h) {
  Mat F, J;
  full_step(m, pi, h, F, J);
  const int keep = lqg_z_dim(m, pi.memory, h + 1) + m.ds();
  Mat Js = J.bottomRows(keep);
  Mat cov = Js * m.Sigma_tau * Js.transpose();
  cov.bottomRightCorner(m.ds(), m.ds()) += m.Sigma_eps;
  return cov;
}

std::vector<Mat> lqg_state_covariances(const LqgModel& m, const LinearPolicy& pi) {
  std::vector<Mat> S;
  S.push_back(m.init_cov());
  for (int h = 1; h < m.horizon; ++h) {
    Mat X = lqg_xi1(m, pi, h);
    S.push_back(X * S.back() * X.transpose() + lqg_xi2_cov(m, pi, h));
  }
  return S;
}

double QuadValueParams::value(int h, const Vec& z, const Vec& s) const {
  if (h > static_cast<int>(Lambda.size())) return 0.0;
  Vec x(z.size() + s.size());
  x << z, s;
  return x.dot(Lambda[h - 1] * x) + Gamma[h - 1];
}

double QuadValueParams::link(int h, const Vec& z, const Vec& o) const {
  if (h > static_cast<int>(Lambda_bar.size())) return 0.0;
  Vec x(z.size() + o.size());
  x << z, o;
  return x.dot(Lambda_bar[h - 1] * x) + Gamma_bar[h - 1];
}

QuadValueParams lqg_value_params(const LqgModel& m, const LinearPolicy& pi) {
  if (numerical_rank(m.C) < m.ds()) throw ConfigError("lqg: C is not full column rank");
  const int H = m.horizon, ds = m.ds();
  QuadValueParams p;
  p.Lambda.resize(H);
  p.Gamma.resize(H);
  p.Lambda_bar.resize(H);
  p.Gamma_bar.resize(H);
  Mat Cp = pinv(m.C);
  for (int h = H; h >= 1; --h) {
    const int dz = lqg_z_dim(m, pi.memory, h);
    const Mat& U1 = pi.U1[h - 1];
    Mat G(m.da(), dz + ds);
    G << pi.U2[h - 1], U1 * m.C;
    Mat cost = G.transpose() * m.R * G;
    cost.bottomRightCorner(ds, ds) += m.Q;
    Mat L = -cost;
    double g = -(U1.transpose() * m.R * U1 * m.Sigma_tau).trace();
    if (h < H) {
      Mat X = lqg_xi1(m, pi, h);
      L += X.transpose() * p.Lambda[h] * X;
      g += (p.Lambda[h] * lqg_xi2_cov(m, pi, h)).trace() + p.Gamma[h];
    }
    L = 0.5 * (L + L.transpose());
    p.Lambda[h - 1] = L;
    p.Gamma[h - 1] = g;
    Mat D = Mat::Zero(dz + ds, dz + m.d_o());
    D.topLeftCorner(dz, dz).setIdentity();
    D.bottomRightCorner(ds, m.d_o()) = Cp;
    p.Lambda_bar[h - 1] = D.transpose() * L * D;
    Mat Lss = L.bottomRightCorner(ds, ds);
    p.Gamma_bar[h - 1] = g - (Cp.transpose() * Lss * Cp * m.Sigma_tau).trace();
  }
  return p;
}

Vec lqg_append(const LqgModel& m, int memory, int h, const Vec& z, const Vec& o, const Vec& a) {
  Vec full(z.size() + o.size() + a.size());
  full << z, o, a;
  const int keep = lqg_z_dim(m, memory, h + 1);
  return full.tail(keep);
}

Vec lqg_action(const LinearPolicy& pi, int h, const Vec& z, const Vec& o) {
  return pi.U1[h - 1] * o + pi.U2[h - 1] * z;
}

namespace {

struct Roots {
  Mat init, eps, tau;
  explicit Roots(const LqgModel& m) : init(psd_sqrt(m.init_cov())), eps(psd_sqrt(m.Sigma_eps)), tau(psd_sqrt(m.Sigma_tau)) {}
};

double reward_of(const LqgModel& m, const Vec& s, const Vec& a) { return -(s.dot(m.Q * s) + a.dot(m.R * a)); }

}  // namespace

LqgEpisode lqg_simulate(const LqgModel& m, const LinearPolicy& pi, Rng& rng) {
  Roots rt(m);
  LqgEpisode ep;
  Vec s = gaussian(rt.init, rng);
  Vec z(0);
  for (int h = 1; h <= m.horizon; ++h) {
    Vec o = m.C * s + gaussian(rt.tau, rng);
    Vec a = lqg_action(pi, h, z, o);
    ep.s.push_back(s);
    ep.o.push_back(o);
    ep.a.push_back(a);
    ep.z.push_back(z);
    ep.r.push_back(reward_of(m, s, a));
    z = lqg_append(m, pi.memory, h, z, o, a);
    s = m.A * s + m.B * a + gaussian(rt.eps, rng);
  }
  return ep;
}

double lqg_rollout_from(const LqgModel& m, const LinearPolicy& pi, int h, const Vec& z0, const Vec& s0, Rng& rng) {
  Roots rt(m);
  Vec s = s0, z = z0;
  double ret = 0.0;
  for (int t = h; t <= m.horizon; ++t) {
    Vec o = m.C * s + gaussian(rt.tau, rng);
    Vec a = lqg_action(pi, t, z, o);
    ret += reward_of(m, s, a);
    z = lqg_append(m, pi.memory, t, z, o, a);
    s = m.A * s + m.B * a + gaussian(rt.eps, rng);
  }
  return ret;
}

std::vector<LqgTuple> lqg_collect(const LqgModel& m, const LinearPolicy& roll_in, const AlphaDesign& ad, int h,
                                  long n, Rng& rng) {
  if (h < 1 || h > m.horizon) throw ConfigError("lqg_collect: step out of range");
  Roots rt(m);
  const int n_atoms = static_cast<int>(ad.atoms.size());
  std::vector<LqgTuple> out;
  out.reserve(n);
  for (long i = 0; i < n; ++i) {
    Vec s = gaussian(rt.init, rng);
    Vec z(0);
    for (int t = 1; t < h; ++t) {
      Vec o = m.C * s + gaussian(rt.tau, rng);
      Vec a = lqg_action(roll_in, t, z, o);
      z = lqg_append(m, roll_in.memory, t, z, o, a);
      s = m.A * s + m.B * a + gaussian(rt.eps, rng);
    }
    LqgTuple tp;
    tp.h = h;
    tp.z = z;
    tp.o = m.C * s + gaussian(rt.tau, rng);
    tp.atom = rng.uniform_int(n_atoms + 1);
    tp.a = tp.atom == 0 ? Vec(Vec::Zero(m.da())) : ad.atoms[tp.atom - 1];
    tp.r = reward_of(m, s, tp.a);
    tp.z_next = lqg_append(m, roll_in.memory, h, z, tp.o, tp.a);
    if (h < m.horizon) {
      Vec s2 = m.A * s + m.B * tp.a + gaussian(rt.eps, rng);
      tp.o_next = m.C * s2 + gaussian(rt.tau, rng);
    }
    out.push_back(std::move(tp));
  }
  return out;
}

LqgThresholds lqg_thresholds(const LqgModel& m, const LinearPolicy& roll_in, const AlphaDesign& ad, int h, long n) {
  const int ds = m.ds();
  Mat S = lqg_state_covariances(m, roll_in)[h - 1];
  const int dz = static_cast<int>(S.rows()) - ds;
  Mat L = Mat::Zero(dz + m.d_o(), dz + ds);
  L.topLeftCorner(dz, dz).setIdentity();
  L.bottomRightCorner(m.d_o(), ds) = m.C;
  Mat Szb = L * S * L.transpose();
  Szb.bottomRightCorner(m.d_o(), m.d_o()) += m.Sigma_tau;
  Mat Sss = S.bottomRightCorner(ds, ds);

  Mat Eaa = Mat::Zero(m.da(), m.da());
  double amax = 0.0;
  for (const Vec& a : ad.atoms) {
    Eaa += a * a.transpose();
    amax = std::max(amax, a.norm());
  }
  Eaa /= static_cast<double>(ad.atoms.size() + 1);

  LqgThresholds th;
  th.Z1 = tail_radius(Szb, n);
  double Zs = tail_radius(Sss, n);
  th.Z2 = op_norm(m.Q) * Zs * Zs + op_norm(m.R) * amax * amax;
  Mat S2 = m.A * Sss * m.A.transpose() + m.B * Eaa * m.B.transpose() + m.Sigma_eps;
  th.Z3 = tail_radius(Mat(m.C * S2 * m.C.transpose() + m.Sigma_tau), n);
  return th;
}

double lqg_loss(const LqgTuple& tp, const QuadValueParams& theta, const LqgModel& m, const LinearPolicy& pi,
                const AlphaDesign& ad, const LqgThresholds& th) {
  Vec zb(tp.z.size() + tp.o.size());
  zb << tp.z, tp.o;
  if (zb.norm() > th.Z1 || std::abs(tp.r) > th.Z2) return 0.0;
  if (tp.o_next.size() && tp.o_next.norm() > th.Z3) return 0.0;
  Vec c = mixing_coeffs(ad, lqg_action(pi, tp.h, tp.z, tp.o));
  const double n1 = static_cast<double>(ad.atoms.size() + 1);
  double w = tp.atom == 0 ? 1.0 - c.sum() : c[tp.atom - 1];
  double u = theta.link(tp.h, tp.z, tp.o) - tp.r;
  if (tp.h < m.horizon) u -= theta.link(tp.h + 1, tp.z_next, tp.o_next);
  return n1 * w * u;
}

double lqg_action_radius(const LqgModel& m, const LinearPolicy& ref) {
  std::vector<Mat> S = lqg_state_covariances(m, ref);
  double sd = 0.0;
  for (int h = 1; h <= m.horizon; ++h) {
    const Mat& U1 = ref.U1[h - 1];
    Mat G(m.da(), S[h - 1].rows());
    G << ref.U2[h - 1], U1 * m.C;
    Mat Ca = G * S[h - 1] * G.transpose() + U1 * m.Sigma_tau * U1.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(Ca);
    sd = std::max(sd, std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())));
  }
  return sd > 0.0 ? 4.0 * sd : 1.0;
}

std::vector<Vec> lqg_design_candidates(int d_a, double Z, int n, std::uint64_t seed) {
  std::vector<Vec> out;
  if (d_a == 1) {
    for (int i = 0; i < n; ++i) out.push_back(Vec::Constant(1, n == 1 ? Z : -Z + 2.0 * Z * i / (n - 1)));
    return out;
  }
  Rng rng = Rng::substream(seed, 0x1d, static_cast<std::uint64_t>(d_a));
  for (int i = 0; i < n; ++i) {
    Vec v(d_a);
    for (int k = 0; k < d_a; ++k) v[k] = rng.normal();
    // half on the boundary sphere, where the leverage of kappa(a) peaks
    double rad = i < n / 2 ? Z : Z * std::pow(rng.uniform(), 1.0 / d_a);
    out.push_back(v / v.norm() * rad);
  }
  return out;
}

}  // namespace pobilin
