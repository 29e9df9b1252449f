#include "horowalk/lattice.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <vector>

namespace horowalk {

LatticePoint::LatticePoint(Dims dims, Matrix basis, double det_tol)
    : dims_(dims), basis_(std::move(basis)) {
  if (basis_.rows() != dims_.k0() || basis_.cols() != dims_.k0()) {
    throw DimensionError("LatticePoint: basis must be k0 x k0");
  }
  if (!basis_.allFinite()) {
    throw std::domain_error("LatticePoint: basis has non-finite entries");
  }
  if (!(std::abs(det_drift()) <= det_tol)) {
    throw std::domain_error("LatticePoint: basis is not unimodular (|det| = " +
                            std::to_string(std::abs(basis_.determinant())) +
                            ")");
  }
}

LatticePoint LatticePoint::standard(Dims dims) {
  return {dims, Matrix::Identity(dims.k0(), dims.k0()), true, Unchecked{}};
}

double LatticePoint::det_drift() const {
  return std::abs(basis_.determinant()) - 1.0;
}

struct LatticeAccess {
  static LatticePoint make(Dims d, Matrix b, bool reduced) {
    return {d, std::move(b), reduced, LatticePoint::Unchecked{}};
  }
};

namespace {

struct GramSchmidt {
  Matrix mu;      // mu(i, j) for j < i
  Vector bstar2;  // |b*_i|^2
};

GramSchmidt gram_schmidt(const Matrix& b) {
  const int n = static_cast<int>(b.cols());
  GramSchmidt gs{Matrix::Identity(n, n), Vector::Zero(n)};
  Matrix star = b;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      const double m = b.col(i).dot(star.col(j)) / gs.bstar2[j];
      gs.mu(i, j) = m;
      star.col(i) -= m * star.col(j);
    }
    gs.bstar2[i] = star.col(i).squaredNorm();
  }
  return gs;
}

constexpr double kSizeSlack = 1e-9;
constexpr int kMaxLllIterations = 1'000'000;

Reduction lll(const LatticePoint& p, bool guarded) {
  const Matrix& in = p.basis();
  if (!in.allFinite()) {
    throw ReductionError("reduce: basis has non-finite entries", in);
  }
  if (guarded) {
    const double cond = gram_condition(in);
    if (!(cond <= kMaxGramCondition)) {
      std::ostringstream os;
      os << "reduce: Gram condition number " << cond << " exceeds "
         << kMaxGramCondition;
      throw ReductionError(os.str(), in);
    }
  }

  const int n = static_cast<int>(in.cols());
  Matrix b = in;
  Matrix t = Matrix::Identity(n, n);
  GramSchmidt gs = gram_schmidt(b);

  int k = 1;
  int iterations = 0;
  while (k < n) {
    if (++iterations > kMaxLllIterations) {
      throw ReductionError("reduce: LLL did not terminate", in);
    }
    for (int j = k - 1; j >= 0; --j) {
      const double m = gs.mu(k, j);
      if (std::abs(m) <= 0.5 + kSizeSlack) continue;
      const double q = std::round(m);
      b.col(k) -= q * b.col(j);
      t.col(k) -= q * t.col(j);
      for (int l = 0; l < j; ++l) gs.mu(k, l) -= q * gs.mu(j, l);
      gs.mu(k, j) -= q;
    }
    const double m = gs.mu(k, k - 1);
    if (gs.bstar2[k] >= (kLovaszDelta - m * m) * gs.bstar2[k - 1]) {
      ++k;
    } else {
      b.col(k).swap(b.col(k - 1));
      t.col(k).swap(t.col(k - 1));
      gs = gram_schmidt(b);
      k = std::max(k - 1, 1);
    }
  }
  if (!b.allFinite()) {
    throw ReductionError("reduce: reduction produced non-finite entries", in);
  }
  return {LatticeAccess::make(p.dims(), std::move(b), true), std::move(t)};
}

// Visits every nonzero integer coefficient vector x with |B x|^2 <= r2
// (pruned through the Gram-Schmidt data of B, which should be reduced).
template <typename Visit>
void enumerate(const Matrix& basis, double r2, std::uint64_t budget,
               Visit&& visit) {
  const int n = static_cast<int>(basis.cols());
  const GramSchmidt gs = gram_schmidt(basis);
  const double slack = r2 * 1e-10;
  std::vector<double> x(n, 0.0);
  std::uint64_t nodes = 0;

  auto rec = [&](auto&& self, int level, double partial) -> void {
    double center = 0.0;
    for (int j = level + 1; j < n; ++j) center -= gs.mu(j, level) * x[j];
    const double rem = r2 + slack - partial;
    if (rem < 0.0) return;
    const double span = std::sqrt(rem / gs.bstar2[level]);
    const double lo = std::ceil(center - span);
    const double hi = std::floor(center + span);
    for (double xi = lo; xi <= hi; xi += 1.0) {
      if (++nodes > budget) {
        throw EnumerationBudgetError(
            "enumeration exceeded budget of " + std::to_string(budget) +
            " nodes");
      }
      const double d = (xi - center) * (xi - center) * gs.bstar2[level];
      if (partial + d > r2 + slack) continue;
      x[level] = xi;
      if (level == 0) {
        visit(x);
      } else {
        self(self, level - 1, partial + d);
      }
    }
    x[level] = 0.0;
  };
  rec(rec, n - 1, 0.0);
}

const LatticePoint& ensure_reduced(const LatticePoint& p, LatticePoint& tmp) {
  if (p.reduced()) return p;
  tmp = reduce(p);
  return tmp;
}

}  // namespace

double gram_condition(const Matrix& basis) {
  Eigen::JacobiSVD<Matrix> svd(basis);
  const Vector& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  const double r = s[0] / smin;
  return r * r;
}

Reduction reduce_with_transform(const LatticePoint& p) { return lll(p, true); }

LatticePoint reduce(const LatticePoint& p) { return lll(p, true).point; }

LatticePoint reduce_unguarded(const LatticePoint& p) {
  return lll(p, false).point;
}

bool is_lll_reduced(const Matrix& basis, double delta) {
  const GramSchmidt gs = gram_schmidt(basis);
  const int n = static_cast<int>(basis.cols());
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      if (std::abs(gs.mu(i, j)) > 0.5 + 1e-6) return false;
    }
    const double m = gs.mu(i, i - 1);
    if (gs.bstar2[i] < (delta - m * m) * gs.bstar2[i - 1] * (1.0 - 1e-9)) {
      return false;
    }
  }
  return true;
}

double shortest_vector_len(const LatticePoint& p, std::uint64_t budget) {
  LatticePoint tmp = p;
  const LatticePoint& r = ensure_reduced(p, tmp);
  const Matrix& b = r.basis();
  double best2 = b.colwise().squaredNorm().minCoeff();
  enumerate(b, best2, budget, [&](const std::vector<double>& x) {
    Vector v = Vector::Zero(b.rows());
    for (int i = 0; i < static_cast<int>(x.size()); ++i) v += x[i] * b.col(i);
    const double n2 = v.squaredNorm();
    if (n2 > 0.0) best2 = std::min(best2, n2);
  });
  return std::sqrt(best2);
}

std::int64_t siegel_count(const LatticePoint& p, double radius,
                          std::uint64_t budget) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("siegel_count: radius must be positive");
  }
  LatticePoint tmp = p;
  const LatticePoint& r = ensure_reduced(p, tmp);
  const Matrix& b = r.basis();
  const double r2 = radius * radius;
  std::int64_t count = 0;
  enumerate(b, r2, budget, [&](const std::vector<double>& x) {
    bool zero = true;
    Vector v = Vector::Zero(b.rows());
    for (int i = 0; i < static_cast<int>(x.size()); ++i) {
      if (x[i] != 0.0) zero = false;
      v += x[i] * b.col(i);
    }
    if (!zero && v.squaredNorm() <= r2 * (1.0 + 1e-12)) ++count;
  });
  return count;
}

double bump_profile(double s) {
  if (!(std::abs(s) < 1.0)) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double shortest_bump(const LatticePoint& p, double center, double width) {
  if (!(width > 0.0)) {
    throw std::invalid_argument("shortest_bump: width must be positive");
  }
  return bump_profile((shortest_vector_len(p) - center) / width);
}

LatticePoint translate(const GroupElement& g, const LatticePoint& p) {
  if (!(g.dims() == p.dims())) throw DimensionError("translate: dims mismatch");
  return LatticeAccess::make(p.dims(), g.entries() * p.basis(), false);
}

LatticePoint apply(const GroupElement& g, const LatticePoint& p) {
  return reduce(translate(g, p));
}

bool same_lattice(const LatticePoint& p, const LatticePoint& q, double tol) {
  if (!(p.dims() == q.dims())) return false;
  const Matrix t = p.basis().fullPivLu().solve(q.basis());
  const Matrix rounded = t.array().round().matrix();
  const double scale = std::max(1.0, rounded.cwiseAbs().maxCoeff());
  if ((t - rounded).cwiseAbs().maxCoeff() > tol * scale) return false;
  return std::abs(std::abs(rounded.determinant()) - 1.0) < 1e-6;
}

namespace {

// gcd of the m x m minors of an integer n x m matrix; 0 if rank < m.
long long minor_gcd(const Matrix& c) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  std::vector<int> rows(m);
  std::iota(rows.begin(), rows.end(), 0);
  long long g = 0;
  for (;;) {
    Matrix sub(m, m);
    for (int i = 0; i < m; ++i) sub.row(i) = c.row(rows[i]);
    g = std::gcd(g, std::llabs(std::llround(sub.determinant())));
    if (g == 1) return 1;
    int i = m - 1;
    while (i >= 0 && rows[i] == n - m + i) --i;
    if (i < 0) return g;
    ++rows[i];
    for (int j = i + 1; j < m; ++j) rows[j] = rows[j - 1] + 1;
  }
}

void normalize_sign(Vector& v) {
  for (Eigen::Index r = 0; r < v.size(); ++r) {
    if (std::abs(v[r]) > 1e-9) {
      if (v[r] < 0) v = -v;
      return;
    }
  }
}

}  // namespace

Matrix sorted_gram(const LatticePoint& p) {
  const Matrix b = reduce(p).basis();
  const int n = static_cast<int>(b.cols());
  double r2 = b.colwise().squaredNorm().maxCoeff();
  for (int attempt = 0; attempt < 4; ++attempt, r2 *= 4.0) {
    struct Candidate {
      Vector coeffs;
      Vector v;
      double norm2;
    };
    std::vector<Candidate> cands;
    enumerate(b, r2, kEnumerationBudget, [&](const std::vector<double>& x) {
      Vector c = Eigen::Map<const Vector>(x.data(), n);
      Vector v = b * c;
      Vector sv = v;
      normalize_sign(sv);
      if (sv != v) return;  // keep one of each +-v pair
      cands.push_back({c, v, v.squaredNorm()});
    });
    // Length first, then coordinates, both compared with a tolerance so that
    // bases of one lattice produce the same order.
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& c) {
      const double tol = 1e-9 * std::max(1.0, std::max(a.norm2, c.norm2));
      if (std::abs(a.norm2 - c.norm2) > tol) return a.norm2 < c.norm2;
      for (Eigen::Index r = 0; r < a.v.size(); ++r) {
        if (std::abs(a.v[r] - c.v[r]) > 1e-9) return a.v[r] < c.v[r];
      }
      return false;
    });
    Matrix chosen(n, 0);
    Matrix vectors(n, 0);
    for (const auto& cand : cands) {
      Matrix trial(n, chosen.cols() + 1);
      trial << chosen, cand.coeffs;
      if (minor_gcd(trial) != 1) continue;
      chosen = trial;
      Matrix vs(n, vectors.cols() + 1);
      vs << vectors, cand.v;
      vectors = vs;
      if (chosen.cols() == n) return vectors.transpose() * vectors;
    }
  }
  throw std::runtime_error("sorted_gram: canonical basis search did not complete");
}

Observable Observable::siegel(double radius) {
  Observable o;
  o.kind = Kind::SiegelCount;
  o.radius = radius;
  o.validate();
  return o;
}

Observable Observable::bump(double center, double width) {
  Observable o;
  o.kind = Kind::ShortestBump;
  o.center = center;
  o.width = width;
  o.validate();
  return o;
}

Observable Observable::shortest_log() {
  Observable o;
  o.kind = Kind::ShortestLog;
  return o;
}

void Observable::validate() const {
  if (kind == Kind::SiegelCount && !(radius > 0.0)) {
    throw std::invalid_argument("siegel_count radius must be positive");
  }
  if (kind == Kind::ShortestBump && !(width > 0.0)) {
    throw std::invalid_argument("shortest_bump width must be positive");
  }
}

std::string Observable::name() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case Kind::SiegelCount:
      os << "siegel_count(R=" << radius << ")";
      break;
    case Kind::ShortestBump:
      os << "shortest_bump(c=" << center << ",w=" << width << ")";
      break;
    case Kind::ShortestLog:
      os << "shortest_log";
      break;
  }
  return os.str();
}

double Observable::evaluate(const LatticePoint& p) const {
  switch (kind) {
    case Kind::SiegelCount:
      return static_cast<double>(siegel_count(p, radius));
    case Kind::ShortestBump:
      return shortest_bump(p, center, width);
    case Kind::ShortestLog:
      return std::log(shortest_vector_len(p));
  }
  return 0.0;
}

double ball_volume(int dim, double radius) {
  const double half = 0.5 * dim;
  return std::pow(std::numbers::pi, half) / std::tgamma(half + 1.0) *
         std::pow(radius, dim);
}

namespace {

// For k0 = 2 the shortest vector of the lattice attached to z = x + iy in
// the standard fundamental domain is 1/sqrt(y). With s = 1/sqrt(y) the
// normalized Haar measure pushes forward to
//   (3/pi) * 2s * w(s) ds,  w = 1 on (0, 1], w = 1 - 2 sqrt(1 - s^-4)
// on [1, (4/3)^{1/4}].
template <typename F>
double modular_shortest_mean(F&& f, std::vector<double> breaks) {
  using boost::math::quadrature::gauss_kronrod;
  const double s_max = std::pow(4.0 / 3.0, 0.25);
  breaks.push_back(0.0);
  breaks.push_back(1.0);
  breaks.push_back(s_max);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0;
  for (size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = std::max(0.0, breaks[i]);
    const double b = std::min(s_max, breaks[i + 1]);
    if (!(b > a)) continue;
    auto integrand = [&](double s) {
      const double w = s <= 1.0 ? 1.0 : 1.0 - 2.0 * std::sqrt(std::max(0.0, 1.0 - std::pow(s, -4.0)));
      return 2.0 * s * w * f(s);
    };
    total += gauss_kronrod<double, 61>::integrate(integrand, a, b, 15, 1e-13);
  }
  return 3.0 / std::numbers::pi * total;
}

}  // namespace

std::optional<double> haar_mean(const Observable& obs, const Dims& dims) {
  switch (obs.kind) {
    case Observable::Kind::SiegelCount:
      return ball_volume(dims.k0(), obs.radius);
    case Observable::Kind::ShortestBump:
      if (dims.k0() != 2) return std::nullopt;
      return modular_shortest_mean(
          [&](double s) { return bump_profile((s - obs.center) / obs.width); },
          {obs.center - obs.width, obs.center, obs.center + obs.width});
    case Observable::Kind::ShortestLog:
      if (dims.k0() != 2) return std::nullopt;
      return modular_shortest_mean([](double s) { return std::log(s); }, {});
  }
  return std::nullopt;
}

}  // namespace horowalk
