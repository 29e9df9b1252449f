#include "doctest.h"

#include "horowalk/stats.hpp"

#include <cmath>
#include <limits>

using namespace horowalk;

namespace {

DiagonalLawSpec law2(double w) {
  return DiagonalLawSpec(Dims(1, 1), (Vector(2) << 0.5, -0.5).finished(),
                         Vector::Constant(2, w));
}

WalkConfig walk2(double w, UnipotentLawSpec u, int trials) {
  const Dims d(1, 1);
  return WalkConfig{d,     law2(w), std::move(u), 1, trials, 5,
                    LatticePoint::standard(d), {}, {}, 1};
}

UnipotentLawSpec zero_unipotent(Dims d) {
  AuxiliaryLaw aux;
  aux.kind = AuxiliaryLaw::Kind::PointMass;
  aux.point = Vector::Zero(d.k());
  return UnipotentLawSpec(CurveSpec::moment(d), 1.0, aux);
}

LieAlgebraElement e12(Dims d) {
  Matrix m = Matrix::Zero(d.k0(), d.k0());
  m(0, d.k0() - 1) = 1.0;
  return {d, m};
}

}  // namespace

TEST_CASE("rate fit on exact exponential") {
  std::vector<SeriesPoint> s;
  for (int n = 1; n <= 20; ++n) s.push_back({n, 7.0 + 3.0 * std::exp(-0.2 * n), 1e-12});
  const RateFit f = estimate_rate(s, 7.0);
  REQUIRE(f.fitted);
  CHECK(std::abs(f.eta_hat - 0.2) < 1e-10);
  CHECK(std::abs(f.c_hat - 3.0) < 1e-9);
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK(f.n_min == 1);
  CHECK(f.n_max == 20);
  CHECK_FALSE(f.floor_n);
  CHECK(f.eta_lo <= f.eta_hat);
  CHECK(f.eta_hi >= f.eta_hat);
}

TEST_CASE("rate fit with multiplicative noise") {
  Stream rng(3, 0, 0);
  std::vector<SeriesPoint> s;
  for (int n = 1; n <= 20; ++n) {
    const double err = 3.0 * std::exp(-0.2 * n) * (1.0 + 0.05 * (2.0 * rng.uniform() - 1.0));
    s.push_back({n, -err, 1e-6});
  }
  const RateFit f = estimate_rate(s, 0.0);
  REQUIRE(f.fitted);
  CHECK(f.eta_hat >= 0.18);
  CHECK(f.eta_hat <= 0.22);
  CHECK(f.r2 > 0.95);
}

TEST_CASE("rate fit floor") {
  std::vector<SeriesPoint> s;
  for (int n = 1; n <= 10; ++n) s.push_back({n, 2.0, 0.1});
  const RateFit f = estimate_rate(s, 2.0);
  CHECK_FALSE(f.fitted);
  REQUIRE(f.floor_n);
  CHECK(*f.floor_n == 1);

  // Signal then noise: the fit stops at the floor.
  std::vector<SeriesPoint> t;
  for (int n = 1; n <= 10; ++n) t.push_back({n, std::exp(-n), 1e-3});
  const RateFit g = estimate_rate(t, 0.0);
  REQUIRE(g.fitted);
  REQUIRE(g.floor_n);
  CHECK(*g.floor_n == 7);
  CHECK(g.n_max == 6);
  CHECK(g.eta_hat == doctest::Approx(1.0));
}

TEST_CASE("wilson interval") {
  const Interval a = wilson_interval(0, 100);
  CHECK(a.lo == 0.0);
  CHECK(a.hi == doctest::Approx(0.036994).epsilon(1e-4));
  const Interval b = wilson_interval(50, 100);
  CHECK(b.lo == doctest::Approx(0.403832).epsilon(1e-4));
  CHECK(b.hi == doctest::Approx(0.596168).epsilon(1e-4));
  const Interval c = wilson_interval(100, 100);
  CHECK(c.hi == doctest::Approx(1.0));
  const Interval none = wilson_interval(0, 0);
  CHECK(none.lo == 0.0);
  CHECK(none.hi == 1.0);
}

TEST_CASE("tail curve slope") {
  const std::int64_t trials = 1000000;
  std::vector<int> ns = {10, 20, 30};
  std::vector<std::int64_t> hits;
  for (int n : ns) hits.push_back(std::llround(trials * std::exp(-0.1 * n)));
  const TailCurve c = TailCurve::from_counts(ns, hits, trials);
  REQUIRE(c.fitted);
  CHECK(c.slope == doctest::Approx(-0.1).epsilon(1e-3));
  CHECK(c.slope_lo < c.slope);
  CHECK(c.slope_hi > c.slope);
  const TailCurve z = TailCurve::from_counts(ns, {0, 0, 0}, trials);
  CHECK_FALSE(z.fitted);
  CHECK(z.points[1].prob == 0.0);
}

TEST_CASE("chernoff rate of the uniform law") {
  const DiagonalLawSpec law = law2(0.1);
  // Small eps: I(eps) ~ eps^2 / (2 var), var = w^2 / 3.
  CHECK(chernoff_rate(law, 0, 1e-3) == doctest::Approx(1e-6 / (2 * 0.01 / 3)).epsilon(1e-3));
  CHECK(chernoff_rate(law, 0, 0.2) == std::numeric_limits<double>::infinity());
  CHECK(chernoff_rate(law, 0, 0.0) == 0.0);
  // Rate from the Legendre transform satisfies I(eps) = l eps - log M(l) at
  // the optimum l, with d/dl log M(l) = eps.
  const double eps = 0.05, r = chernoff_rate(law, 0, eps);
  for (double l : {1.0, 10.0, 30.0, 60.0, 100.0}) {
    CHECK(r >= l * eps - coordinate_log_mgf(law, 0, l) - 1e-12);
  }
  CHECK(chernoff_bound(law, 0, eps, 0) == 1.0);
  CHECK(chernoff_bound(law, 0, eps, 80) == doctest::Approx(2 * std::exp(-80 * r)));
  // Forced coordinate: minus a single independent term for k0 = 2.
  CHECK(coordinate_log_mgf(law, 1, 7.0) == coordinate_log_mgf(law, 0, 7.0));
  CHECK_THROWS_AS(chernoff_rate(law, 2, eps), std::invalid_argument);
}

TEST_CASE("two-point law mgf") {
  const DiagonalLawSpec law(Dims(1, 1), (Vector(2) << 0.5, -0.5).finished(),
                            Vector::Constant(2, 0.1),
                            DiagonalLawSpec::Kind::DiscreteTwoPoint);
  CHECK(coordinate_log_mgf(law, 0, 3.0) == doctest::Approx(std::log(std::cosh(0.3))));
}

TEST_CASE("chernoff tails") {
  TailOptions opt{20000, 9, 0};
  const TailCurve zero = chernoff_tail(law2(0.0), 0, 0.05, {10, 20}, opt);
  for (const auto& p : zero.points) CHECK(p.prob == 0.0);
  const TailCurve all = chernoff_tail(law2(0.1), 0, 0.0, {10, 20}, opt);
  for (const auto& p : all.points) CHECK(p.prob == 1.0);

  const DiagonalLawSpec law = law2(0.1);
  const TailCurve c = chernoff_tail(law, 0, 0.03, {5, 10, 20}, opt);
  for (size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    CHECK(p.prob <= chernoff_bound(law, 0, 0.03, p.n) + 3 * (p.hi - p.lo));
    if (i > 0) CHECK(p.prob < c.points[i - 1].prob);
  }
  CHECK(c.fitted);
  CHECK(c.slope < 0.0);
  opt.threads = 1;
  const TailCurve c1 = chernoff_tail(law, 0, 0.03, {5, 10, 20}, opt);
  for (size_t i = 0; i < c.points.size(); ++i) CHECK(c.points[i].prob == c1.points[i].prob);
}

TEST_CASE("expansion set mass") {
  TailOptions opt{5000, 2, 0};
  const TailCurve det = expansion_set_mass(law2(0.0), {1, 5, 40}, opt);
  for (const auto& p : det.points) CHECK(p.prob == 0.0);
  const TailCurve wide = expansion_set_mass(law2(0.3), {40}, opt);
  CHECK(wide.points[0].prob < 0.01);
  // One step with width larger than the gap: failures are possible.
  const DiagonalLawSpec loose(Dims(1, 1), (Vector(2) << 0.05, -0.05).finished(),
                              Vector::Constant(2, 0.5));
  const TailCurve l = expansion_set_mass(loose, {1, 40}, opt);
  CHECK(l.points[0].prob > 0.1);
  CHECK(l.points[1].prob <= l.points[0].prob);
  const DiagonalLawSpec bad(Dims(1, 1), (Vector(2) << -0.5, 0.5).finished(),
                            Vector::Zero(2));
  CHECK_THROWS_AS(expansion_set_mass(bad, {1}, opt), std::invalid_argument);
}

TEST_CASE("conjugation growth") {
  TailOptions opt{2000, 4, 0};
  const Dims d(1, 1);
  const UnipotentLawSpec u(CurveSpec::moment(d));
  const GrowthCurve below = conjugation_growth(law2(0.0), u, {1, 10, 40}, 2.5, opt);
  for (const auto& p : below.expanded.points) CHECK(p.prob == 1.0);
  const GrowthCurve above = conjugation_growth(law2(0.0), u, {1, 10, 40}, 3.0, opt);
  for (const auto& p : above.expanded.points) CHECK(p.prob == 0.0);
  for (const auto& p : above.failure.points) CHECK(p.prob == 1.0);
  CHECK_THROWS_AS(conjugation_growth(law2(0.0), u, {1}, 0.5, opt), std::invalid_argument);
  CHECK_THROWS_AS(conjugation_growth(law2(0.0), zero_unipotent(d), {1}, 2.0, opt),
                  std::runtime_error);
}

TEST_CASE("lyapunov exact diagonal case") {
  const Dims d(1, 1);
  WalkConfig c = walk2(0.0, zero_unipotent(d), 3);
  const LyapunovReport r = lyapunov_check(c, {e12(d)}, 200);
  for (const auto& row : r.exponents) CHECK(std::abs(row[0] - 1.0) < 1e-9);
  CHECK(r.nonpositive == 0);
  // The lower corner contracts.
  Matrix m = Matrix::Zero(2, 2);
  m(1, 0) = 1.0;
  const LyapunovReport lo = lyapunov_check(c, {LieAlgebraElement(d, m)}, 50);
  CHECK(std::abs(lo.exponents[0][0] + 1.0) < 1e-9);
  CHECK(lo.nonpositive == 3);
}

TEST_CASE("lyapunov scale invariance") {
  const Dims d(1, 1);
  WalkConfig c = walk2(0.2, UnipotentLawSpec(CurveSpec::moment(d)), 4);
  Stream rng(8, 0, 0);
  const LieAlgebraElement v = random_traceless(d, rng);
  const LieAlgebraElement v17(d, 17.0 * v.entries());
  const int n = 60;
  const LyapunovReport a = lyapunov_check(c, {v, e12(d)}, n);
  const LyapunovReport b = lyapunov_check(c, {v17, LieAlgebraElement(d, 17.0 * e12(d).entries())}, n);
  for (int t = 0; t < c.trials; ++t) {
    CHECK(std::abs(b.exponents[t][0] - std::log(17.0) / n - a.exponents[t][0]) < 1e-13);
    CHECK(std::abs(b.exponents[t][1] - std::log(17.0) / n - a.exponents[t][1]) < 1e-15);
  }
  CHECK(a.nonpositive == 0);
  CHECK_THROWS_AS(lyapunov_check(c, {LieAlgebraElement(d, Matrix::Zero(2, 2))}, n),
                  std::invalid_argument);
}

TEST_CASE("random traceless") {
  Stream rng(1, 2, 3);
  for (int i = 0; i < 20; ++i) {
    const LieAlgebraElement v = random_traceless(Dims(2, 1), rng);
    CHECK(std::abs(v.entries().trace()) < 1e-14);
    CHECK(v.norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("Q non-vanishing") {
  const Dims d(1, 1);
  const QReport in_u = q_nonvanishing_check({e12(d)}, 1000, 1);
  CHECK(in_u.zero_fraction[0] == 0.0);
  CHECK(in_u.min_norm[0] == doctest::Approx(1.0));

  Matrix low = Matrix::Zero(2, 2);
  low(1, 0) = 1.0;
  const QReport r = q_nonvanishing_check({LieAlgebraElement(d, low)}, 10000, 2);
  CHECK(r.zero_fraction[0] == 0.0);
  CHECK(r.min_norm[0] > 0.0);

  // Diagonal v: Q(Ad(u(x)) v) = -2 x for v = diag(1, -1).
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = 1.0;
  h(1, 1) = -1.0;
  const QReport q = q_nonvanishing_check({LieAlgebraElement(d, h)}, 1000, 3);
  CHECK(q.zero_fraction[0] == 0.0);

  Stream rng(4, 0, 0);
  std::vector<LieAlgebraElement> vs;
  for (int i = 0; i < 10; ++i) vs.push_back(random_traceless(Dims(2, 1), rng));
  const QReport k3 = q_nonvanishing_check(vs, 1000, 5);
  for (double f : k3.zero_fraction) CHECK(f == 0.0);
  CHECK_THROWS_AS(q_nonvanishing_check({LieAlgebraElement(d, Matrix::Zero(2, 2))}, 10, 1),
                  std::invalid_argument);
}
