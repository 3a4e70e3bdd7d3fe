#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pobilin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error taxonomy. The CLI maps these onto exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ImpossibleObservation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ObservabilityError : std::runtime_error {
  double sigma_min;
  ObservabilityError(const std::string& what, double s) : std::runtime_error(what), sigma_min(s) {}
};

struct InfeasibleConstraint : std::runtime_error {
  int iteration;
  double min_radius;
  InfeasibleConstraint(const std::string& what, int t, double r)
      : std::runtime_error(what), iteration(t), min_radius(r) {}
};

struct ConvergenceError : std::runtime_error {
  double final_value;
  ConvergenceError(const std::string& what, double v) : std::runtime_error(what), final_value(v) {}
};

// splitmix64 finalizer; used to derive independent substreams from one seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(mix64(seed)) {}

  // Deterministic child stream keyed by (seed, a, b, c).
  static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ mix64(a + 0x51ULL));
    k = mix64(k ^ mix64(b + 0xa3ULL));
    k = mix64(k ^ mix64(c + 0xf7ULL));
    return Rng(k);
  }

  std::uint64_t next() { return eng_(); }
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  int uniform_int(int n) { return static_cast<int>(uniform() * n) % n; }
  double normal() { return norm_(eng_); }

  // Inverse-CDF draw from an unnormalised-safe probability row.
  template <class Row>
  int categorical(const Row& p, int n) {
    double u = uniform();
    double acc = 0.0;
    int last = 0;
    for (int i = 0; i < n; ++i) {
      if (p[i] <= 0.0) continue;
      acc += p[i];
      last = i;
      if (u < acc) return i;
    }
    return last;
  }

  Vec dirichlet(int n, double alpha = 1.0) {
    std::gamma_distribution<double> g(alpha, 1.0);
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = g(eng_);
    double s = v.sum();
    if (s <= 0) v.setConstant(1.0 / n); else v /= s;
    return v;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> norm_{0.0, 1.0};
};

// SVD pseudo-inverse with cutoff rel_tol * sigma_max.
Mat pinv(const Mat& A, double rel_tol = 1e-9);
// Numerical rank with the same cutoff convention.
int numerical_rank(const Mat& A, double rel_tol = 1e-9);
double sigma_min(const Mat& A);
// max_j sum_i |A_ij|
double l1_operator_norm(const Mat& A);
// Orthonormal basis of the column span.
Mat column_span_basis(const Mat& A, double rel_tol = 1e-9);

// Thread cap from POBILIN_THREADS (default 1).
int thread_count();
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace pobilin
