#include "horowalk/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace horowalk {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_se = 0.0;
};

// Weighted least squares of y on x. With unit weights the slope standard
// error comes from the residuals; with `known_variance` it comes from the
// weights alone.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& w, bool known_variance) {
  const size_t m = x.size();
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (size_t i = 0; i < m; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xb = sx / sw, yb = sy / sw;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < m; ++i) {
    sxx += w[i] * (x[i] - xb) * (x[i] - xb);
    sxy += w[i] * (x[i] - xb) * (y[i] - yb);
    syy += w[i] * (y[i] - yb) * (y[i] - yb);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = yb - f.slope * xb;
  double rss = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    rss += w[i] * r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  if (known_variance) {
    f.slope_se = std::sqrt(1.0 / sxx);
  } else if (m > 2) {
    f.slope_se = std::sqrt(rss / static_cast<double>(m - 2) / sxx);
  }
  return f;
}

std::uint64_t seed_for_n(std::uint64_t seed, int n) {
  return splitmix64(seed ^ (static_cast<std::uint64_t>(n) * kGoldenGamma));
}

// Counts trials t in [0, trials) with hit(t) true, in fixed chunks so the
// result does not depend on the thread count.
template <typename Hit>
std::int64_t count_hits(std::int64_t trials, int threads, Hit&& hit) {
  constexpr std::int64_t kChunks = 256;
  std::vector<std::int64_t> per_chunk(kChunks, 0);
  parallel_for(static_cast<int>(kChunks), threads, [&](int c) {
    const std::int64_t lo = trials * c / kChunks;
    const std::int64_t hi = trials * (c + 1) / kChunks;
    std::int64_t local = 0;
    for (std::int64_t t = lo; t < hi; ++t) {
      if (hit(t)) ++local;
    }
    per_chunk[static_cast<size_t>(c)] = local;
  });
  return std::accumulate(per_chunk.begin(), per_chunk.end(), std::int64_t{0});
}

Vector sum_of_diagonals(const DiagonalLawSpec& law, std::uint64_t seed,
                        std::int64_t trial, int n) {
  Vector total = Vector::Zero(law.dims().k0());
  for (int s = 1; s <= n; ++s) {
    Stream rng(seed, static_cast<std::uint64_t>(trial),
               static_cast<std::uint64_t>(s));
    total += sample_diag(law, rng).log_entries();
  }
  return total;
}

}  // namespace

// ------------------------------------------------------------- rate fits

RateFit estimate_rate(const std::vector<SeriesPoint>& series,
                      double haar_mean) {
  RateFit fit;
  std::vector<SeriesPoint> sorted = series;
  std::sort(sorted.begin(), sorted.end(),
            [](const SeriesPoint& a, const SeriesPoint& b) { return a.n < b.n; });
  std::vector<double> xs, ys;
  for (const auto& p : sorted) {
    const double err = std::abs(p.mean - haar_mean);
    fit.points.emplace_back(p.n, err);
    const bool signal = err > 2.0 * p.stderr_mean && err > 0.0;
    if (!signal && !fit.floor_n) fit.floor_n = p.n;
    if (signal && !fit.floor_n) {
      xs.push_back(p.n);
      ys.push_back(std::log(err));
    }
  }
  if (xs.size() < 3) return fit;

  const LineFit f = fit_line(xs, ys, std::vector<double>(xs.size(), 1.0), false);
  fit.fitted = true;
  fit.eta_hat = -f.slope;
  fit.c_hat = std::exp(f.intercept);
  fit.r2 = f.r2;
  const double dof = static_cast<double>(xs.size() - 2);
  const double t = boost::math::quantile(
      boost::math::complement(boost::math::students_t(dof), 0.025));
  fit.eta_lo = fit.eta_hat - t * f.slope_se;
  fit.eta_hi = fit.eta_hat + t * f.slope_se;
  fit.n_min = static_cast<int>(xs.front());
  fit.n_max = static_cast<int>(xs.back());
  return fit;
}

Interval wilson_interval(std::int64_t successes, std::int64_t trials,
                         double z) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

TailCurve TailCurve::from_counts(const std::vector<int>& ns,
                                 const std::vector<std::int64_t>& hits,
                                 std::int64_t trials) {
  TailCurve c;
  std::vector<double> xs, ys, ws;
  for (size_t i = 0; i < ns.size(); ++i) {
    const Interval iv = wilson_interval(hits[i], trials);
    const double p = static_cast<double>(hits[i]) / static_cast<double>(trials);
    c.points.push_back({ns[i], p, iv.lo, iv.hi, trials, hits[i]});
    if (hits[i] > 0 && hits[i] < trials) {
      xs.push_back(ns[i]);
      ys.push_back(std::log(p));
      // Var(log p_hat) ~ (1 - p) / (trials p).
      ws.push_back(static_cast<double>(hits[i]) / (1.0 - p));
    }
  }
  if (xs.size() >= 2) {
    const LineFit f = fit_line(xs, ys, ws, true);
    c.fitted = true;
    c.slope = f.slope;
    c.slope_lo = f.slope - 1.96 * f.slope_se;
    c.slope_hi = f.slope + 1.96 * f.slope_se;
  }
  return c;
}

// ----------------------------------------------------------- Chernoff

namespace {

// log(sinh(x) / x), stable for small and large x.
double log_sinhc(double x) {
  x = std::abs(x);
  if (x < 1e-4) return x * x / 6.0;
  if (x > 20.0) return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0 * x);
  return std::log(std::sinh(x) / x);
}

double log_cosh(double x) {
  x = std::abs(x);
  return x + std::log1p(std::exp(-2.0 * x)) - std::log(2.0);
}

double single_log_mgf(const DiagonalLawSpec& law, int i, double lambda) {
  const double w = law.half_widths()[i];
  return law.kind() == DiagonalLawSpec::Kind::UniformBox
             ? log_sinhc(lambda * w)
             : log_cosh(lambda * w);
}

double support_half_width(const DiagonalLawSpec& law, int coordinate) {
  const int k0 = law.dims().k0();
  if (coordinate < k0 - 1) return law.half_widths()[coordinate];
  double w = 0.0;
  for (int j = 0; j + 1 < k0; ++j) w += law.half_widths()[j];
  return w;
}

void check_coordinate(const DiagonalLawSpec& law, int coordinate) {
  if (coordinate < 0 || coordinate >= law.dims().k0()) {
    throw std::invalid_argument("coordinate out of range");
  }
}

}  // namespace

double coordinate_log_mgf(const DiagonalLawSpec& law, int coordinate,
                          double lambda) {
  check_coordinate(law, coordinate);
  const int k0 = law.dims().k0();
  if (coordinate < k0 - 1) return single_log_mgf(law, coordinate, lambda);
  // The forced coordinate is minus a sum of independent symmetric terms.
  double s = 0.0;
  for (int j = 0; j + 1 < k0; ++j) s += single_log_mgf(law, j, lambda);
  return s;
}

double chernoff_rate(const DiagonalLawSpec& law, int coordinate, double eps) {
  check_coordinate(law, coordinate);
  if (!(eps > 0.0)) return 0.0;
  const double w = support_half_width(law, coordinate);
  if (eps >= w) return std::numeric_limits<double>::infinity();
  auto neg = [&](double l) {
    return -(l * eps - coordinate_log_mgf(law, coordinate, l));
  };
  double hi = 1.0 / w;
  while (neg(2.0 * hi) < neg(hi) && hi < 1e12) hi *= 2.0;
  const auto [arg, val] =
      boost::math::tools::brent_find_minima(neg, 0.0, 4.0 * hi, 52);
  (void)arg;
  return -val;
}

double chernoff_bound(const DiagonalLawSpec& law, int coordinate, double eps,
                      int n) {
  const double rate = chernoff_rate(law, coordinate, eps);
  return std::min(1.0, 2.0 * std::exp(-n * rate));
}

TailCurve chernoff_tail(const DiagonalLawSpec& law, int coordinate,
                        double eps, const std::vector<int>& ns,
                        const TailOptions& opt) {
  check_coordinate(law, coordinate);
  if (eps < 0.0) throw std::invalid_argument("chernoff_tail: eps must be >= 0");
  const double rho = law.means()[coordinate];
  std::vector<std::int64_t> hits;
  for (int n : ns) {
    if (n < 1) throw std::invalid_argument("chernoff_tail: n must be >= 1");
    const std::uint64_t seed = seed_for_n(opt.seed, n);
    hits.push_back(count_hits(opt.trials, opt.threads, [&](std::int64_t t) {
      const double s = sum_of_diagonals(law, seed, t, n)[coordinate];
      return std::abs(s / n - rho) > eps;
    }));
  }
  return TailCurve::from_counts(ns, hits, opt.trials);
}

TailCurve expansion_set_mass(const DiagonalLawSpec& law,
                             const std::vector<int>& ns,
                             const TailOptions& opt) {
  if (!law.expanding()) {
    throw std::invalid_argument(
        "expansion_set_mass: law is not asymptotically U-expanding");
  }
  const Dims& d = law.dims();
  std::vector<std::int64_t> hits;
  for (int n : ns) {
    if (n < 1) throw std::invalid_argument("expansion_set_mass: n must be >= 1");
    const std::uint64_t seed = seed_for_n(opt.seed, n);
    hits.push_back(count_hits(opt.trials, opt.threads, [&](std::int64_t t) {
      const Vector s = sum_of_diagonals(law, seed, t, n);
      for (int i = 0; i < d.k1; ++i) {
        for (int j = 0; j < d.k2; ++j) {
          if (!(s[i] - s[d.k1 + j] > n * law.beta()(i, j))) return true;
        }
      }
      return false;
    }));
  }
  return TailCurve::from_counts(ns, hits, opt.trials);
}

GrowthCurve conjugation_growth(const DiagonalLawSpec& law,
                               const UnipotentLawSpec& unipotent,
                               const std::vector<int>& ns, double c_probe,
                               const TailOptions& opt) {
  if (!(c_probe > 1.0)) {
    throw std::invalid_argument("conjugation_growth: C_probe must exceed 1");
  }
  if (!(law.dims() == unipotent.dims())) {
    throw DimensionError("conjugation_growth: dims mismatch");
  }
  const Dims& d = law.dims();
  const double log_c = std::log(c_probe);
  constexpr int kMaxResamples = 1000;
  std::vector<std::int64_t> expanded, failed;
  GrowthCurve out;
  for (int n : ns) {
    if (n < 1) throw std::invalid_argument("conjugation_growth: n must be >= 1");
    const std::uint64_t seed = seed_for_n(opt.seed, n);
    std::atomic<std::int64_t> zeros{0};
    const std::int64_t hit = count_hits(opt.trials, opt.threads, [&](std::int64_t t) {
      const Vector s = sum_of_diagonals(law, seed, t, n);
      // The unipotent draw uses step index 0, disjoint from the diagonal steps.
      Stream rng(seed, static_cast<std::uint64_t>(t), 0);
      Vector x = sample_unipotent(unipotent, rng).x();
      int tries = 0;
      while (!(x.norm() > 0.0)) {
        ++zeros;
        if (++tries > kMaxResamples) {
          throw std::runtime_error("conjugation_growth: unipotent law is a point mass at 0");
        }
        x = sample_unipotent(unipotent, rng).x();
      }
      // C_{a^{-1}} scales block entry (i, j) by exp(t_i - t_{k1+j}); work in
      // logs to avoid overflow.
      double log_max = -std::numeric_limits<double>::infinity();
      Vector logs(d.k());
      for (int i = 0; i < d.k1; ++i) {
        for (int j = 0; j < d.k2; ++j) {
          const int idx = i * d.k2 + j;
          logs[idx] = x[idx] == 0.0 ? -std::numeric_limits<double>::infinity()
                                    : s[i] - s[d.k1 + j] + std::log(std::abs(x[idx]));
          log_max = std::max(log_max, logs[idx]);
        }
      }
      double acc = 0.0;
      for (int idx = 0; idx < d.k(); ++idx) acc += std::exp(2.0 * (logs[idx] - log_max));
      const double log_ratio = log_max + 0.5 * std::log(acc) - std::log(x.norm());
      return log_ratio > n * log_c;
    });
    out.zero_resamples += zeros.load();
    expanded.push_back(hit);
    failed.push_back(opt.trials - hit);
  }
  out.expanded = TailCurve::from_counts(ns, expanded, opt.trials);
  out.failure = TailCurve::from_counts(ns, failed, opt.trials);
  return out;
}

// ------------------------------------------------------------- adjoint

LyapunovReport lyapunov_check(const WalkConfig& cfg,
                              const std::vector<LieAlgebraElement>& vs,
                              int steps) {
  if (steps < 1) throw std::invalid_argument("lyapunov_check: steps must be >= 1");
  for (const auto& v : vs) {
    if (!(v.dims() == cfg.dims)) throw DimensionError("lyapunov_check: dims mismatch");
    if (!(v.norm() > 0.0)) throw std::invalid_argument("lyapunov_check: v must be nonzero");
  }
  const size_t nv = vs.size();
  LyapunovReport rep;
  rep.steps = steps;
  rep.exponents.assign(cfg.trials, std::vector<double>(nv, 0.0));

  parallel_for(cfg.trials, cfg.threads, [&](int trial) {
    std::vector<Matrix> w(nv);
    std::vector<double> log_norm(nv);
    std::vector<bool> dead(nv, false);
    for (size_t i = 0; i < nv; ++i) {
      const double n0 = vs[i].norm();
      w[i] = vs[i].entries() / n0;
      log_norm[i] = std::log(n0);
    }
    for (int step = 1; step <= steps; ++step) {
      Stream rng(cfg.seed, static_cast<std::uint64_t>(trial),
                 static_cast<std::uint64_t>(step));
      const UnipotentParam u = sample_unipotent(cfg.unipotent, rng);
      const DiagonalSample a = sample_diag(cfg.diagonal, rng);
      // g = a u(x), g^{-1} = u(-x) a^{-1}, both exact in structure.
      const Matrix g = a.matrix().entries() * embed_u(u).entries();
      const Vector neg = -u.x();
      const Matrix g_inv = embed_u(UnipotentParam(cfg.dims, neg)).entries() *
                           a.inverse().matrix().entries();
      for (size_t i = 0; i < nv; ++i) {
        if (dead[i]) continue;
        w[i] = g * w[i] * g_inv;
        const double nrm = w[i].norm();
        if (!(nrm > 0.0) || !std::isfinite(nrm)) {
          dead[i] = true;
          continue;
        }
        log_norm[i] += std::log(nrm);
        w[i] /= nrm;
      }
    }
    for (size_t i = 0; i < nv; ++i) {
      rep.exponents[trial][i] = dead[i] ? -std::numeric_limits<double>::infinity()
                                        : log_norm[i] / steps;
    }
  });

  rep.mean_by_vector.assign(nv, 0.0);
  for (const auto& row : rep.exponents) {
    for (size_t i = 0; i < nv; ++i) {
      if (std::isinf(row[i])) ++rep.underflows;
      if (!(row[i] > 0.0)) ++rep.nonpositive;
      rep.mean_by_vector[i] += row[i] / cfg.trials;
    }
  }
  const double pairs = static_cast<double>(cfg.trials) * static_cast<double>(nv);
  rep.nonpositive_fraction = pairs > 0 ? rep.nonpositive / pairs : 0.0;
  return rep;
}

QReport q_nonvanishing_check(const std::vector<LieAlgebraElement>& vs,
                             std::int64_t samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("q_nonvanishing_check: samples < 1");
  QReport r;
  r.samples = samples;
  for (size_t i = 0; i < vs.size(); ++i) {
    const LieAlgebraElement& v = vs[i];
    if (!(v.norm() > 0.0)) {
      throw std::invalid_argument("q_nonvanishing_check: v must be nonzero");
    }
    const Dims& d = v.dims();
    std::int64_t zeros = 0;
    double min_norm = std::numeric_limits<double>::infinity();
    for (std::int64_t s = 0; s < samples; ++s) {
      Stream rng(seed, i, static_cast<std::uint64_t>(s));
      const UnipotentParam x(d, sample_ball(d.k(), 1.0, rng));
      const double q = q_project(ad_action(embed_u(x), v)).x().norm();
      min_norm = std::min(min_norm, q);
      if (q <= 1e-10) ++zeros;
    }
    r.zero_fraction.push_back(static_cast<double>(zeros) / static_cast<double>(samples));
    r.min_norm.push_back(min_norm);
  }
  return r;
}

LieAlgebraElement random_traceless(Dims dims, Stream& rng) {
  const int k0 = dims.k0();
  Matrix m(k0, k0);
  for (int i = 0; i < k0; ++i) {
    for (int j = 0; j < k0; ++j) m(i, j) = rng.normal();
  }
  const double tr = m.trace() / k0;
  for (int i = 0; i < k0; ++i) m(i, i) -= tr;
  m /= m.norm();
  return {dims, std::move(m)};
}

}  // namespace horowalk
