#pragma once

// Post-processing of walk output into rates and tail curves, plus the
// adjoint-action checks (Lyapunov growth, Q non-vanishing).

#include "horowalk/measures.hpp"
#include "horowalk/walk.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace horowalk {

struct SeriesPoint {
  int n = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;
};

/// Log-linear fit |mean - haar| ~ C exp(-eta n) over the signal region: the
/// leading run of points with |mean - haar| > 2 stderr.
struct RateFit {
  std::vector<std::pair<int, double>> points;  // (n, |mean - haar|), all n
  /// False when fewer than three signal points exist (noise floor reached).
  bool fitted = false;
  double eta_hat = 0.0;
  double c_hat = 0.0;
  double r2 = 0.0;
  double eta_lo = 0.0;
  double eta_hi = 0.0;
  int n_min = 0;
  int n_max = 0;
  /// First n whose error is within 2 stderr of zero, if any.
  std::optional<int> floor_n;
};

RateFit estimate_rate(const std::vector<SeriesPoint>& series,
                      double haar_mean);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for `successes` out of `trials` at z = 1.96.
Interval wilson_interval(std::int64_t successes, std::int64_t trials,
                         double z = 1.96);

struct TailPoint {
  int n = 0;
  double prob = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  std::int64_t trials = 0;
  std::int64_t hits = 0;
};

/// Empirical tail probabilities with Wilson intervals and a weighted
/// log-linear decay fit over the points with hits > 0.
struct TailCurve {
  std::vector<TailPoint> points;
  bool fitted = false;
  double slope = 0.0;  // d log(prob) / dn
  double slope_lo = 0.0;
  double slope_hi = 0.0;

  /// Builds points from hit counts and fits the slope.
  static TailCurve from_counts(const std::vector<int>& ns,
                               const std::vector<std::int64_t>& hits,
                               std::int64_t trials);
};

/// Common controls for the Monte Carlo tail estimators.
struct TailOptions {
  std::int64_t trials = 100000;
  std::uint64_t seed = 1;
  int threads = 0;
};

/// Log moment generating function of (t_i - alpha_i) under the law.
double coordinate_log_mgf(const DiagonalLawSpec& law, int coordinate,
                          double lambda);

/// Cramer rate I(eps) = sup_{lambda >= 0} lambda eps - log M(lambda) for the
/// centred coordinate. Infinite when eps exceeds the support.
double chernoff_rate(const DiagonalLawSpec& law, int coordinate, double eps);

/// Two-sided bound min(1, 2 exp(-n I(eps))).
double chernoff_bound(const DiagonalLawSpec& law, int coordinate, double eps,
                      int n);

/// P(|S_n/n - alpha_i| > eps) for S_n the sum of n draws of coordinate i
/// (0-based).
TailCurve chernoff_tail(const DiagonalLawSpec& law, int coordinate,
                        double eps, const std::vector<int>& ns,
                        const TailOptions& opt);

/// 1 - mu_A^{*n}(E_n), E_n = {a_i - a_j > n beta_ij for all i <= k1 < j}.
/// Throws std::invalid_argument for non-expanding laws.
TailCurve expansion_set_mass(const DiagonalLawSpec& law,
                             const std::vector<int>& ns,
                             const TailOptions& opt);

struct GrowthCurve {
  /// Mass of {|C_{a^{-1}} x| / |x| > C_probe^n}.
  TailCurve expanded;
  /// Complement of `expanded`.
  TailCurve failure;
  /// Number of x = 0 draws that had to be resampled.
  std::int64_t zero_resamples = 0;
};

/// Throws std::invalid_argument unless c_probe > 1.
GrowthCurve conjugation_growth(const DiagonalLawSpec& law,
                               const UnipotentLawSpec& unipotent,
                               const std::vector<int>& ns, double c_probe,
                               const TailOptions& opt);

struct LyapunovReport {
  int steps = 0;
  /// exponents[trial][v] = (1/n) log |Ad(g_n ... g_1) v|; -inf on underflow.
  std::vector<std::vector<double>> exponents;
  std::vector<double> mean_by_vector;
  std::int64_t nonpositive = 0;
  std::int64_t underflows = 0;
  double nonpositive_fraction = 0.0;
};

/// Runs cfg.trials walks of `steps` steps and propagates each v through the
/// adjoint action with per-step renormalization.
LyapunovReport lyapunov_check(const WalkConfig& cfg,
                              const std::vector<LieAlgebraElement>& vs,
                              int steps);

struct QReport {
  /// Per v, fraction of x draws with |Q(Ad(u(x)) v)| <= 1e-10.
  std::vector<double> zero_fraction;
  std::vector<double> min_norm;
  std::int64_t samples = 0;
};

/// x drawn uniformly from the unit ball in R^k. Throws for v = 0.
QReport q_nonvanishing_check(const std::vector<LieAlgebraElement>& vs,
                             std::int64_t samples, std::uint64_t seed);

/// Gaussian traceless matrix scaled to unit Frobenius norm.
LieAlgebraElement random_traceless(Dims dims, Stream& rng);

}  // namespace horowalk
