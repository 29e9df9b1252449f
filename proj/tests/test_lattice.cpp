#include "doctest.h"

#include "horowalk/lattice.hpp"
#include "horowalk/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace horowalk;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  return (Matrix(2, 2) << a, b, c, d).finished();
}

// Unimodular integer matrix with entries in [-5, 5], by rejection.
Matrix random_unimodular(int n, Stream& rng) {
  for (;;) {
    Matrix t(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        t(i, j) = static_cast<double>(static_cast<int>(rng() % 11) - 5);
    if (std::abs(std::abs(t.determinant()) - 1.0) < 1e-9) return t;
  }
}

// Random unimodular real basis: SL(k0,R) element with moderate entries.
Matrix random_basis(int n, Stream& rng) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.normal();
  double det = m.determinant();
  if (det < 0) {
    m.col(0) *= -1;
    det = -det;
  }
  return m / std::pow(det, 1.0 / n);
}

// All lattice vectors with coefficients bounded by |c_i| <= R * |row_i(B^-1)|.
std::vector<double> brute_norms(const Matrix& b, double radius) {
  const int n = static_cast<int>(b.cols());
  const Matrix inv = b.inverse();
  std::vector<int> bound(n);
  for (int i = 0; i < n; ++i) bound[i] = static_cast<int>(std::floor(radius * inv.row(i).norm()));
  std::vector<double> out;
  std::vector<int> c(n);
  for (int i = 0; i < n; ++i) c[i] = -bound[i];
  for (;;) {
    Vector v = Vector::Zero(n);
    bool zero = true;
    for (int i = 0; i < n; ++i) {
      v += c[i] * b.col(i);
      zero = zero && c[i] == 0;
    }
    if (!zero) out.push_back(v.norm());
    int i = 0;
    while (i < n && c[i] == bound[i]) {
      c[i] = -bound[i];
      ++i;
    }
    if (i == n) break;
    ++c[i];
  }
  return out;
}

std::int64_t brute_count(const Matrix& b, double radius) {
  auto norms = brute_norms(b, radius);
  return std::count_if(norms.begin(), norms.end(), [&](double r) { return r <= radius; });
}

double brute_shortest(const Matrix& b) {
  double best = b.colwise().norm().minCoeff();
  auto norms = brute_norms(b, best);
  for (double r : norms) best = std::min(best, r);
  return best;
}

}  // namespace

TEST_CASE("lattice point checks covolume") {
  Dims d(1, 1);
  CHECK_NOTHROW(LatticePoint(d, mat2(2, 0, 0, 0.5)));
  CHECK_NOTHROW(LatticePoint(d, mat2(0, 1, 1, 0)));  // det -1
  CHECK_THROWS(LatticePoint(d, mat2(2, 0, 0, 1)));
  CHECK_THROWS_AS(LatticePoint(d, Matrix::Identity(3, 3)), DimensionError);
  CHECK(LatticePoint::standard(Dims(2, 1)).basis() == Matrix::Identity(3, 3));
}

TEST_CASE("reduce examples") {
  Dims d(1, 1);
  LatticePoint id = reduce(LatticePoint::standard(d));
  CHECK(id.reduced());
  CHECK((id.basis().transpose() * id.basis() - Matrix::Identity(2, 2)).norm() == 0.0);

  LatticePoint skew(d, mat2(1, 100, 0, 1));
  Reduction r = reduce_with_transform(skew);
  CHECK(r.point.basis().colwise().norm().maxCoeff() <= std::sqrt(2.0) + 1e-12);
  CHECK(same_lattice(r.point, LatticePoint::standard(d)));
  CHECK((skew.basis() * r.transform - r.point.basis()).norm() < 1e-12);
  CHECK(std::abs(std::abs(r.transform.determinant()) - 1.0) < 1e-12);
  CHECK((r.transform.array() - r.transform.array().round()).abs().maxCoeff() == 0.0);
}

TEST_CASE("reduce on random bases") {
  Stream rng(21, 0, 0);
  for (int n : {2, 3, 4}) {
    Dims d(n - 1, 1);
    for (int t = 0; t < 200; ++t) {
      Matrix b = random_basis(n, rng) * random_unimodular(n, rng);
      LatticePoint p(d, b, 1e-8);
      Reduction r = reduce_with_transform(p);
      CHECK(is_lll_reduced(r.point.basis()));
      CHECK(std::abs(std::abs(r.point.basis().determinant()) - std::abs(b.determinant())) < 1e-9);
      CHECK(same_lattice(p, r.point));
      // Idempotent up to sign and order.
      CHECK((sorted_gram(r.point) - sorted_gram(reduce(r.point))).norm() < 1e-10);
    }
  }
}

TEST_CASE("reduction failure carries the basis") {
  Dims d(1, 1);
  LatticePoint p(d, mat2(1e8, 0, 0, 1e-8));
  try {
    (void)reduce(p);
    FAIL("expected ReductionError");
  } catch (const ReductionError& e) {
    CHECK(e.basis() == p.basis());
  }
  CHECK(gram_condition(p.basis()) > kMaxGramCondition);
  CHECK_NOTHROW(reduce_unguarded(p));
}

TEST_CASE("shortest vector examples") {
  Dims d(1, 1);
  CHECK(shortest_vector_len(LatticePoint::standard(d)) == doctest::Approx(1.0));
  CHECK(shortest_vector_len(LatticePoint(d, mat2(2, 0, 0, 0.5))) == doctest::Approx(0.5));
  Matrix b = mat2(1, 0.5, 0, 1);
  double brute = 1e9;
  for (int i = -10; i <= 10; ++i)
    for (int j = -10; j <= 10; ++j)
      if (i || j) brute = std::min(brute, (i * b.col(0) + j * b.col(1)).norm());
  CHECK(brute == doctest::Approx(1.0));
  CHECK(shortest_vector_len(LatticePoint(d, b)) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("siegel count examples") {
  Dims d(1, 1);
  LatticePoint z2 = LatticePoint::standard(d);
  CHECK(siegel_count(z2, 0.5) == 0);
  CHECK(siegel_count(z2, 1.5) == 8);
  CHECK(siegel_count(z2, 1.0) == 4);
  CHECK(siegel_count(LatticePoint::standard(Dims(2, 1)), 1.5) == 18);
}

TEST_CASE("enumeration agrees with brute force") {
  Stream rng(22, 0, 0);
  for (int n : {2, 3, 4}) {
    Dims d(n - 1, 1);
    for (int t = 0; t < 60; ++t) {
      LatticePoint p = reduce(LatticePoint(d, random_basis(n, rng), 1e-8));
      const double r = rng.uniform(0.5, 2.0);
      CHECK(siegel_count(p, r) == brute_count(p.basis(), r));
      CHECK(shortest_vector_len(p) == doctest::Approx(brute_shortest(p.basis())).epsilon(1e-12));
    }
  }
}

TEST_CASE("counts are even and monotone in R") {
  Stream rng(23, 0, 0);
  for (int t = 0; t < 50; ++t) {
    LatticePoint p(Dims(2, 1), random_basis(3, rng), 1e-8);
    std::int64_t prev = 0;
    for (double r = 0.25; r <= 2.5; r += 0.25) {
      const std::int64_t c = siegel_count(p, r);
      CHECK(c % 2 == 0);
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_CASE("functionals are invariant under change of basis") {
  Stream rng(24, 0, 0);
  for (Dims d : {Dims(1, 1), Dims(2, 1), Dims(2, 2)}) {
    const int n = d.k0();
    for (int t = 0; t < 100; ++t) {
      Matrix b = random_basis(n, rng);
      Matrix b2 = b * random_unimodular(n, rng);
      LatticePoint p(d, b, 1e-8), q(d, b2, 1e-8);
      CHECK(siegel_count(p, 1.3) == siegel_count(q, 1.3));
      CHECK(std::abs(shortest_vector_len(p) - shortest_vector_len(q)) < 1e-9);
    }
  }
}

TEST_CASE("budget overflow withholds the count") {
  LatticePoint z2 = LatticePoint::standard(Dims(1, 1));
  CHECK_THROWS_AS(siegel_count(z2, 100.0, 1000), EnumerationBudgetError);
}

TEST_CASE("bump profile") {
  CHECK(bump_profile(0.0) == 1.0);
  CHECK(bump_profile(1.0) == 0.0);
  CHECK(bump_profile(-1.5) == 0.0);
  CHECK(bump_profile(0.5) == doctest::Approx(std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-15));
  CHECK(bump_profile(0.5) == doctest::Approx(0.7165).epsilon(1e-4));

  Dims d(1, 1);
  LatticePoint z2 = LatticePoint::standard(d);
  CHECK(shortest_bump(z2, 1.0, 0.5) == 1.0);
  CHECK(shortest_bump(z2, 2.0, 0.5) == 0.0);
  CHECK(shortest_bump(z2, 1.25, 0.5) == doctest::Approx(0.7165).epsilon(1e-4));
}

TEST_CASE("shortest bump is Lipschitz under perturbation") {
  Stream rng(25, 0, 0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    Matrix b = random_basis(2, rng);
    Matrix e(2, 2);
    e << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    e *= 1e-6;
    Matrix b2 = b + e;
    b2 /= std::sqrt(std::abs(b2.determinant()));
    LatticePoint p(Dims(1, 1), b, 1e-8), q(Dims(1, 1), b2, 1e-8);
    const double db = std::abs(shortest_bump(p, 1.0, 0.5) - shortest_bump(q, 1.0, 0.5));
    worst = std::max(worst, db / (b - b2).norm());
  }
  CHECK(std::isfinite(worst));
  CHECK(worst < 50.0);
}

TEST_CASE("apply") {
  Dims d(1, 1);
  LatticePoint z2 = LatticePoint::standard(d);
  CHECK(same_lattice(apply(GroupElement::identity(d), z2), z2));
  GroupElement g(d, mat2(2, 0, 0, 0.5));
  CHECK(shortest_vector_len(apply(g, z2)) == doctest::Approx(0.5));

  Stream rng(26, 0, 0);
  for (Dims dd : {Dims(1, 1), Dims(2, 1)}) {
    for (int t = 0; t < 50; ++t) {
      GroupElement a(dd, random_basis(dd.k0(), rng), 1e-8);
      GroupElement h(dd, random_basis(dd.k0(), rng), 1e-8);
      LatticePoint p = LatticePoint::standard(dd);
      LatticePoint lhs = apply(a, apply(h, p));
      LatticePoint rhs = apply(a * h, p);
      CHECK((sorted_gram(lhs) - sorted_gram(rhs)).norm() < 1e-8);
      CHECK(same_lattice(lhs, rhs));
    }
  }
}

TEST_CASE("observable names and validation") {
  CHECK(Observable::siegel(1.5).name() == "siegel_count(R=1.5)");
  CHECK(Observable::shortest_log().name() == "shortest_log");
  CHECK_THROWS(Observable::siegel(0.0).validate());
  CHECK_THROWS(Observable::bump(1.0, -0.1).validate());
  CHECK(Observable::siegel(1.5).evaluate(LatticePoint::standard(Dims(1, 1))) == 8.0);
}

TEST_CASE("ball volumes") {
  CHECK(ball_volume(2, 1.5) == doctest::Approx(std::numbers::pi * 2.25));
  CHECK(ball_volume(2, 1.5) == doctest::Approx(7.0686).epsilon(1e-4));
  CHECK(ball_volume(3, 1.2) == doctest::Approx(4.0 / 3.0 * std::numbers::pi * 1.728));
  CHECK(ball_volume(3, 1.2) == doctest::Approx(7.2382).epsilon(1e-4));
  CHECK(ball_volume(4, 1.0) == doctest::Approx(std::numbers::pi * std::numbers::pi / 2));
}

TEST_CASE("haar means against sampled modular lattices") {
  // Haar measure on SL(2,R)/SL(2,Z) via the fundamental domain
  // |x| <= 1/2, x^2 + y^2 >= 1 with density (3/pi) dx dy / y^2. In u = 1/y
  // that is uniform; the lattice is spanned by (1,0)/sqrt(y), (x,y)/sqrt(y).
  Dims d(1, 1);
  Stream rng(27, 0, 0);
  const int samples = 400000;
  const std::vector<Observable> obs = {Observable::siegel(1.5), Observable::bump(1.0, 0.5),
                                       Observable::bump(0.7, 0.3), Observable::shortest_log()};
  std::vector<double> sum(obs.size(), 0.0), sum2(obs.size(), 0.0);
  int accepted = 0;
  while (accepted < samples) {
    const double x = rng.uniform(-0.5, 0.5);
    const double u = rng.uniform(0.0, 2.0 / std::sqrt(3.0));
    if (u > 1.0 / std::sqrt(1.0 - x * x)) continue;
    ++accepted;
    const double y = 1.0 / u;
    LatticePoint p(d, mat2(1, x, 0, y) / std::sqrt(y));
    for (size_t o = 0; o < obs.size(); ++o) {
      const double v = obs[o].evaluate(p);
      sum[o] += v;
      sum2[o] += v * v;
    }
  }
  for (size_t o = 0; o < obs.size(); ++o) {
    const double mean = sum[o] / samples;
    const double se = std::sqrt((sum2[o] / samples - mean * mean) / samples);
    const auto h = haar_mean(obs[o], d);
    REQUIRE(h.has_value());
    INFO(obs[o].name(), " mc=", mean, " se=", se, " exact=", *h);
    CHECK(std::abs(mean - *h) < 4.0 * se);
  }
  CHECK_FALSE(haar_mean(Observable::bump(1.0, 0.5), Dims(2, 1)).has_value());
  CHECK(haar_mean(Observable::siegel(1.2), Dims(2, 1)).value() == doctest::Approx(ball_volume(3, 1.2)));
}
