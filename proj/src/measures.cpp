#include "horowalk/measures.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace horowalk {

// ---------------------------------------------------------------- curves

CurveSpec::CurveSpec(Kind kind, Dims dims, Matrix coeffs)
    : kind_(kind), dims_(dims), coeffs_(std::move(coeffs)) {
  if (coeffs_.rows() != dims_.k() || coeffs_.cols() < 1) {
    throw DimensionError("CurveSpec: coefficient table must have k = " +
                         std::to_string(dims_.k()) +
                         " rows and at least one column");
  }
  if (!coeffs_.allFinite()) {
    throw std::invalid_argument("CurveSpec: non-finite coefficient");
  }
}

CurveSpec CurveSpec::moment(Dims dims) {
  const int k = dims.k();
  Matrix c = Matrix::Zero(k, k + 1);
  for (int i = 0; i < k; ++i) c(i, i + 1) = 1.0;
  return {Kind::Moment, dims, std::move(c)};
}

CurveSpec CurveSpec::planar_demo(Dims dims) {
  Matrix c = Matrix::Zero(dims.k(), 2);
  c.col(1).setOnes();
  return {Kind::PlanarDemo, dims, std::move(c)};
}

CurveSpec CurveSpec::constant_demo(Dims dims) {
  Matrix c = Matrix::Constant(dims.k(), 1, 0.5);
  return {Kind::ConstantDemo, dims, std::move(c)};
}

CurveSpec CurveSpec::custom_polynomial(Dims dims, Matrix coefficients) {
  return {Kind::CustomPolynomial, dims, std::move(coefficients)};
}

Vector CurveSpec::eval(double t, int order) const {
  const int k = dims_.k();
  const int deg = static_cast<int>(coeffs_.cols()) - 1;
  Vector out = Vector::Zero(k);
  // Horner on the order-th derivative.
  for (int p = deg; p >= order; --p) {
    double factor = 1.0;
    for (int q = 0; q < order; ++q) factor *= p - q;
    out = out * t + factor * coeffs_.col(p);
  }
  return out;
}

Vector CurveSpec::value(double t) const { return eval(t, 0); }
Vector CurveSpec::derivative(double t) const { return eval(t, 1); }
Vector CurveSpec::second_derivative(double t) const { return eval(t, 2); }

CurveSpec CurveSpec::transformed(const Matrix& m) const {
  if (m.rows() != dims_.k() || m.cols() != dims_.k()) {
    throw DimensionError("CurveSpec::transformed: expected k x k matrix");
  }
  return custom_polynomial(dims_, m * coeffs_);
}

std::string CurveSpec::kind_name(Kind kind) {
  switch (kind) {
    case Kind::Moment: return "moment";
    case Kind::PlanarDemo: return "planar_demo";
    case Kind::ConstantDemo: return "constant_demo";
    case Kind::CustomPolynomial: return "custom_polynomial";
  }
  return "?";
}

CurveSpec::Kind CurveSpec::kind_from_name(const std::string& name) {
  for (Kind k : {Kind::Moment, Kind::PlanarDemo, Kind::ConstantDemo,
                 Kind::CustomPolynomial}) {
    if (kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown curve kind '" + name + "'");
}

// ------------------------------------------------------------ diagonal law

DiagonalLawSpec::DiagonalLawSpec(Dims dims, Vector means, Vector half_widths,
                                 Kind kind)
    : dims_(dims),
      means_(std::move(means)),
      widths_(std::move(half_widths)),
      kind_(kind) {
  const int k0 = dims_.k0();
  if (means_.size() != k0 || widths_.size() != k0) {
    throw DimensionError("DiagonalLawSpec: means and widths need length k0 = " +
                         std::to_string(k0));
  }
  if (!means_.allFinite() || !widths_.allFinite()) {
    throw std::invalid_argument("DiagonalLawSpec: non-finite parameter");
  }
  if ((widths_.array() < 0.0).any()) {
    throw std::invalid_argument("DiagonalLawSpec: widths must be nonnegative");
  }
  const double scale = std::max(1.0, means_.cwiseAbs().maxCoeff());
  if (std::abs(means_.sum()) > 1e-12 * scale) {
    throw std::invalid_argument(
        "DiagonalLawSpec: means must satisfy the zero-sum constraint "
        "sum(alpha) = 0 (got " +
        std::to_string(means_.sum()) + ")");
  }
  beta_ = Matrix(dims_.k1, dims_.k2);
  beta_min_ = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dims_.k1; ++i) {
    for (int j = 0; j < dims_.k2; ++j) {
      const double gap = means_[i] - means_[dims_.k1 + j];
      beta_(i, j) = gap / 2.0;
      beta_min_ = std::min(beta_min_, std::abs(beta_(i, j)));
      if (!(gap > 0.0)) violations_.emplace_back(i + 1, dims_.k1 + j + 1);
    }
  }
}

std::string DiagonalLawSpec::kind_name(Kind kind) {
  return kind == Kind::UniformBox ? "uniform_box" : "discrete_two_point";
}

DiagonalLawSpec::Kind DiagonalLawSpec::kind_from_name(const std::string& name) {
  if (name == "uniform_box") return Kind::UniformBox;
  if (name == "discrete_two_point") return Kind::DiscreteTwoPoint;
  throw std::invalid_argument("unknown diagonal law kind '" + name + "'");
}

std::string AuxiliaryLaw::kind_name(Kind kind) {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::UniformBall: return "uniform_ball";
    case Kind::PointMass: return "point_mass";
  }
  return "?";
}

AuxiliaryLaw::Kind AuxiliaryLaw::kind_from_name(const std::string& name) {
  for (Kind k : {Kind::None, Kind::UniformBall, Kind::PointMass}) {
    if (kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown auxiliary law kind '" + name + "'");
}

UnipotentLawSpec::UnipotentLawSpec(CurveSpec curve, double mixture,
                                   AuxiliaryLaw auxiliary)
    : curve_(std::move(curve)), mixture_(mixture), aux_(std::move(auxiliary)) {
  if (!(mixture_ >= 0.0 && mixture_ <= 1.0)) {
    throw std::invalid_argument("UnipotentLawSpec: mixture weight must be in [0, 1]");
  }
  if (mixture_ > 0.0 && aux_.kind == AuxiliaryLaw::Kind::None) {
    throw std::invalid_argument(
        "UnipotentLawSpec: positive mixture weight needs an auxiliary law");
  }
  if (aux_.kind == AuxiliaryLaw::Kind::UniformBall && !(aux_.radius > 0.0)) {
    throw std::invalid_argument("UnipotentLawSpec: ball radius must be positive");
  }
  if (aux_.kind == AuxiliaryLaw::Kind::PointMass &&
      aux_.point.size() != curve_.dims().k()) {
    throw DimensionError("UnipotentLawSpec: point mass needs length k");
  }
}

// --------------------------------------------------------------- sampling

DiagonalSample sample_diag(const DiagonalLawSpec& spec, Stream& rng) {
  const int k0 = spec.dims().k0();
  std::vector<double> free(k0 - 1);
  for (int i = 0; i + 1 < k0; ++i) {
    const double a = spec.means()[i];
    const double w = spec.half_widths()[i];
    const double u = rng.uniform();
    if (spec.kind() == DiagonalLawSpec::Kind::UniformBox) {
      free[i] = a + w * (2.0 * u - 1.0);
    } else {
      free[i] = u < 0.5 ? a - w : a + w;
    }
  }
  return DiagonalSample::from_free(spec.dims(), free);
}

Vector sample_ball(int dim, double radius, Stream& rng) {
  Vector g(dim);
  for (int i = 0; i < dim; ++i) g[i] = rng.normal();
  double n = g.norm();
  while (!(n > 0.0)) {
    for (int i = 0; i < dim; ++i) g[i] = rng.normal();
    n = g.norm();
  }
  const double r = radius * std::pow(rng.uniform(), 1.0 / dim);
  return g * (r / n);
}

UnipotentParam sample_unipotent(const UnipotentLawSpec& spec, Stream& rng) {
  const Dims& d = spec.dims();
  const double pick = rng.uniform();
  if (pick < spec.mixture()) {
    const AuxiliaryLaw& aux = spec.auxiliary();
    if (aux.kind == AuxiliaryLaw::Kind::PointMass) return {d, aux.point};
    return {d, sample_ball(d.k(), aux.radius, rng)};
  }
  return {d, spec.curve().value(rng.uniform())};
}

// -------------------------------------------------------------- F_psi

namespace {

Matrix f_psi_matrix(std::span<const Vector> scalings,
                    std::span<const double> x, const CurveSpec& curve) {
  const int k = curve.dims().k();
  if (static_cast<int>(scalings.size()) != k ||
      static_cast<int>(x.size()) != k) {
    throw DimensionError("f_psi: need k scalings and k points");
  }
  Matrix m(k, k);
  for (int i = 0; i < k; ++i) {
    if (scalings[i].size() != k) throw DimensionError("f_psi: scaling size");
    m.col(i) = scalings[i].cwiseProduct(curve.derivative(x[i]));
  }
  return m;
}

double det_small(const Matrix& m) {
  if (m.rows() == 1) return m(0, 0);
  if (m.rows() == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return m.determinant();
}

}  // namespace

double f_psi(std::span<const Vector> scalings, std::span<const double> x,
             const CurveSpec& curve) {
  for (double xi : x) {
    if (!(xi >= 0.0 && xi <= 1.0)) {
      throw std::domain_error("f_psi: points must lie in [0, 1]");
    }
  }
  return det_small(f_psi_matrix(scalings, x, curve));
}

NonplanarityReport nonplanarity_check(const CurveSpec& curve,
                                      std::int64_t samples, double tol,
                                      std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("nonplanarity_check: samples < 1");
  const int k = curve.dims().k();
  const std::vector<Vector> ident(k, Vector::Ones(k));
  std::vector<double> dets(static_cast<size_t>(samples));
  std::vector<double> x(k);
  Stream rng(seed, 0, 0);
  std::int64_t zeros = 0;
  for (std::int64_t s = 0; s < samples; ++s) {
    for (int i = 0; i < k; ++i) x[i] = rng.uniform();
    const double d = std::abs(det_small(f_psi_matrix(ident, x, curve)));
    dets[static_cast<size_t>(s)] = d;
    if (d <= tol) ++zeros;
  }
  NonplanarityReport r;
  r.samples = samples;
  r.zero_fraction = static_cast<double>(zeros) / static_cast<double>(samples);
  auto quantile = [&](double q) {
    const auto idx = static_cast<size_t>(q * static_cast<double>(samples - 1));
    std::nth_element(dets.begin(), dets.begin() + static_cast<long>(idx), dets.end());
    return dets[idx];
  };
  r.min_abs_det = *std::min_element(dets.begin(), dets.end());
  r.q01 = quantile(0.01);
  r.q10 = quantile(0.10);
  r.q50 = quantile(0.50);
  return r;
}

// ------------------------------------------------------ density, k = 1

namespace {

double bisect_root(auto&& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Breakpoints 0 = c_0 < ... < c_m = 1 between which phi (k = 1) is monotone.
std::vector<double> monotone_breaks(const CurveSpec& curve) {
  constexpr int kScan = 4096;
  auto dphi = [&](double t) { return curve.derivative(t)[0]; };
  std::vector<double> breaks{0.0};
  double prev = dphi(0.0);
  for (int i = 1; i <= kScan; ++i) {
    const double t = static_cast<double>(i) / kScan;
    const double cur = dphi(t);
    if (prev != 0.0 && cur != 0.0 && (prev < 0.0) != (cur < 0.0)) {
      breaks.push_back(bisect_root(dphi, static_cast<double>(i - 1) / kScan, t));
    } else if (cur == 0.0 && i < kScan) {
      breaks.push_back(t);
    }
    if (cur != 0.0) prev = cur;
  }
  breaks.push_back(1.0);
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  return breaks;
}

struct Piece {
  double t0, t1;  // parameter range
  double y0, y1;  // image of the endpoints under a * phi
};

std::vector<Piece> monotone_pieces(double scaling, const CurveSpec& curve) {
  const auto br = monotone_breaks(curve);
  std::vector<Piece> pieces;
  for (size_t i = 0; i + 1 < br.size(); ++i) {
    pieces.push_back({br[i], br[i + 1], scaling * curve.value(br[i])[0],
                      scaling * curve.value(br[i + 1])[0]});
  }
  return pieces;
}

double density_1d(double scaling, const CurveSpec& curve,
                  const std::vector<Piece>& pieces, double y) {
  double g = 0.0;
  for (const Piece& p : pieces) {
    const double lo = std::min(p.y0, p.y1), hi = std::max(p.y0, p.y1);
    if (!(y > lo && y < hi)) continue;
    const double t = bisect_root(
        [&](double s) { return scaling * curve.value(s)[0] - y; }, p.t0, p.t1);
    std::array<double, 1> xs{t};
    std::array<Vector, 1> as{Vector::Constant(1, scaling)};
    g += 1.0 / std::abs(f_psi(as, xs, curve));
  }
  return g;
}

}  // namespace

double pushforward_density_1d(double scaling, const CurveSpec& curve, double y) {
  if (curve.dims().k() != 1) throw DimensionError("pushforward_density_1d: k != 1");
  return density_1d(scaling, curve, monotone_pieces(scaling, curve), y);
}

namespace {

DensityDiagnostic density_check_1d(double scaling, const CurveSpec& curve,
                                   const DensityGrid& grid,
                                   std::int64_t samples, std::uint64_t seed) {
  const int cells = grid.cells;
  const double h = (grid.hi - grid.lo) / cells;
  DensityDiagnostic out;
  out.grid = grid;
  out.dim = 1;
  out.samples = samples;
  out.histogram.assign(cells, 0.0);
  out.analytic.assign(cells, 0.0);
  out.center_density.assign(cells, 0.0);
  out.flagged.assign(cells, false);

  std::vector<std::int64_t> counts(cells, 0);
  std::int64_t escaped = 0;
  Stream rng(seed, 0, 0);
  for (std::int64_t s = 0; s < samples; ++s) {
    const double y = scaling * curve.value(rng.uniform())[0];
    const double pos = (y - grid.lo) / h;
    // Cells are half-open (lo, hi] so that y = hi lands in the last cell.
    auto idx = static_cast<std::int64_t>(std::ceil(pos)) - 1;
    if (pos <= 0.0 || idx >= cells) {
      ++escaped;
      continue;
    }
    ++counts[static_cast<size_t>(idx)];
  }

  const auto pieces = monotone_pieces(scaling, curve);
  std::vector<double> image_breaks;
  for (const Piece& p : pieces) {
    image_breaks.push_back(p.y0);
    image_breaks.push_back(p.y1);
    if (p.y0 == p.y1) {
      // Constant piece: an atom, not absolutely continuous.
      const double pos = (p.y0 - grid.lo) / h;
      const auto idx = static_cast<std::int64_t>(std::ceil(pos)) - 1;
      if (pos > 0.0 && idx < cells) out.flagged[static_cast<size_t>(idx)] = true;
    }
  }
  std::sort(image_breaks.begin(), image_breaks.end());

  boost::math::quadrature::tanh_sinh<double> integrator;
  auto g = [&](double y) { return density_1d(scaling, curve, pieces, y); };
  for (int c = 0; c < cells; ++c) {
    const double a = grid.lo + c * h, b = a + h;
    out.center_density[c] = g(0.5 * (a + b));
    if (out.flagged[c]) continue;
    std::vector<double> cuts{a};
    for (double br : image_breaks) {
      if (br > a && br < b) cuts.push_back(br);
    }
    cuts.push_back(b);
    double mass = 0.0;
    try {
      for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        double err = 0.0;
        mass += integrator.integrate(g, cuts[i], cuts[i + 1], 1e-10, &err);
        if (!(err <= 1e-6 * std::max(1.0, mass))) {
          throw std::runtime_error("unresolved");
        }
      }
      if (!std::isfinite(mass)) throw std::runtime_error("unresolved");
      out.analytic[c] = mass;
    } catch (const std::exception&) {
      out.flagged[c] = true;
    }
  }

  const double n = static_cast<double>(samples);
  for (int c = 0; c < cells; ++c) out.histogram[c] = counts[c] / n;
  out.escaped_mass = escaped / n;
  return out;
}

// ------------------------------------------------------ density, k = 2

struct Preimages {
  double density = 0.0;
  bool unresolved = false;
  size_t count = 0;
};

Preimages density_2d(const std::array<Vector, 2>& a, const CurveSpec& curve,
                     const Vector& y) {
  constexpr int kSeeds = 8;
  std::vector<Eigen::Vector2d> roots;
  Preimages out;
  auto psi = [&](const Eigen::Vector2d& x) {
    return Eigen::Vector2d(a[0].cwiseProduct(curve.value(x[0])) +
                           a[1].cwiseProduct(curve.value(x[1])));
  };
  const double scale = std::max(1.0, y.norm());
  for (int si = 0; si < kSeeds; ++si) {
    for (int sj = 0; sj < kSeeds; ++sj) {
      Eigen::Vector2d x((si + 0.5) / kSeeds, (sj + 0.5) / kSeeds);
      bool ok = false;
      for (int it = 0; it < 60; ++it) {
        const Eigen::Vector2d r = psi(x) - Eigen::Vector2d(y);
        if (r.norm() < 1e-13 * scale) {
          ok = true;
          break;
        }
        Eigen::Matrix2d j;
        j.col(0) = a[0].cwiseProduct(curve.derivative(x[0]));
        j.col(1) = a[1].cwiseProduct(curve.derivative(x[1]));
        const double det = j.determinant();
        if (std::abs(det) < 1e-300) break;
        x -= j.inverse() * r;
        if (!x.allFinite() || (x.array() < -0.5).any() || (x.array() > 1.5).any()) {
          break;
        }
      }
      if (!ok) continue;
      if ((x.array() < -1e-12).any() || (x.array() > 1.0 + 1e-12).any()) continue;
      x = x.cwiseMax(0.0).cwiseMin(1.0);
      bool dup = false;
      for (const auto& r : roots) {
        if ((r - x).norm() < 1e-7) dup = true;
      }
      if (!dup) roots.push_back(x);
    }
  }
  for (const auto& x : roots) {
    std::array<double, 2> xs{x[0], x[1]};
    const double f = std::abs(f_psi(a, xs, curve));
    if (f < 1e-6) {
      out.unresolved = true;
      continue;
    }
    out.density += 1.0 / f;
  }
  out.count = roots.size();
  return out;
}

DensityDiagnostic density_check_2d(const std::array<Vector, 2>& a,
                                   const CurveSpec& curve,
                                   const DensityGrid& grid,
                                   std::int64_t samples, std::uint64_t seed) {
  const int cells = grid.cells;
  const double h = (grid.hi - grid.lo) / cells;
  const size_t total = static_cast<size_t>(cells) * cells;
  DensityDiagnostic out;
  out.grid = grid;
  out.dim = 2;
  out.samples = samples;
  out.histogram.assign(total, 0.0);
  out.analytic.assign(total, 0.0);
  out.center_density.assign(total, 0.0);
  out.flagged.assign(total, false);

  std::vector<std::int64_t> counts(total, 0);
  std::int64_t escaped = 0;
  Stream rng(seed, 0, 0);
  for (std::int64_t s = 0; s < samples; ++s) {
    const double x0 = rng.uniform(), x1 = rng.uniform();
    const Vector y = a[0].cwiseProduct(curve.value(x0)) +
                     a[1].cwiseProduct(curve.value(x1));
    const double p0 = (y[0] - grid.lo) / h, p1 = (y[1] - grid.lo) / h;
    const auto i0 = static_cast<std::int64_t>(std::ceil(p0)) - 1;
    const auto i1 = static_cast<std::int64_t>(std::ceil(p1)) - 1;
    if (p0 <= 0.0 || p1 <= 0.0 || i0 >= cells || i1 >= cells) {
      ++escaped;
      continue;
    }
    ++counts[static_cast<size_t>(i0 * cells + i1)];
  }

  // 3-point Gauss-Legendre per axis.
  const double gl_x[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  const double gl_w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  for (int c0 = 0; c0 < cells; ++c0) {
    for (int c1 = 0; c1 < cells; ++c1) {
      const size_t idx = static_cast<size_t>(c0) * cells + c1;
      const double m0 = grid.lo + (c0 + 0.5) * h, m1 = grid.lo + (c1 + 0.5) * h;
      Vector y(2);
      y << m0, m1;
      const Preimages center = density_2d(a, curve, y);
      out.center_density[idx] = center.density;
      double mass = 0.0;
      bool unresolved = center.unresolved;
      for (int u = 0; u < 3; ++u) {
        for (int v = 0; v < 3; ++v) {
          y << m0 + 0.5 * h * gl_x[u], m1 + 0.5 * h * gl_x[v];
          const Preimages p = density_2d(a, curve, y);
          unresolved = unresolved || p.unresolved || p.count != center.count;
          mass += gl_w[u] * gl_w[v] * p.density;
        }
      }
      // A change in preimage count inside the cell means it meets a fold.
      for (int corner = 0; corner < 4 && !unresolved; ++corner) {
        y << m0 + ((corner & 1) ? 0.5 : -0.5) * h,
            m1 + ((corner & 2) ? 0.5 : -0.5) * h;
        unresolved = density_2d(a, curve, y).count != center.count;
      }
      if (unresolved) {
        out.flagged[idx] = true;
      } else {
        out.analytic[idx] = mass * 0.25 * h * h;
      }
    }
  }
  const double n = static_cast<double>(samples);
  for (size_t c = 0; c < total; ++c) out.histogram[c] = counts[c] / n;
  out.escaped_mass = escaped / n;
  return out;
}

void finish(DensityDiagnostic& d) {
  d.histogram_mass = 0.0;
  d.flagged_mass = 0.0;
  d.analytic_mass = 0.0;
  d.flagged_cells = 0;
  double tv = 0.0;
  for (size_t c = 0; c < d.histogram.size(); ++c) {
    d.histogram_mass += d.histogram[c];
    if (d.flagged[c]) {
      ++d.flagged_cells;
      d.flagged_mass += d.histogram[c];
      continue;
    }
    d.analytic_mass += d.analytic[c];
    tv += std::abs(d.histogram[c] - d.analytic[c]);
  }
  d.total_variation = 0.5 * tv;
}

}  // namespace

DensityDiagnostic pushforward_density_check(std::span<const Vector> scalings,
                                            const CurveSpec& curve,
                                            const DensityGrid& grid,
                                            std::int64_t samples,
                                            std::uint64_t seed) {
  const int k = curve.dims().k();
  if (k > 2) {
    throw DimensionError("pushforward_density_check: supported for k <= 2 only");
  }
  if (static_cast<int>(scalings.size()) != k) {
    throw DimensionError("pushforward_density_check: need k scalings");
  }
  if (grid.cells < 1 || !(grid.hi > grid.lo) || samples < 1) {
    throw std::invalid_argument("pushforward_density_check: bad grid or samples");
  }
  DensityDiagnostic d =
      k == 1 ? density_check_1d(scalings[0][0], curve, grid, samples, seed)
             : density_check_2d({scalings[0], scalings[1]}, curve, grid,
                                samples, seed);
  finish(d);
  return d;
}

// ------------------------------------------------------------- nu_abar

std::vector<Vector> theta_block(std::span<const DiagonalSample> block) {
  if (block.empty()) throw std::invalid_argument("theta_block: empty block");
  const int k = static_cast<int>(block.size());
  std::vector<Vector> maps;
  maps.reserve(k);
  for (int j = k - 1; j >= 1; --j) maps.push_back(theta(block.first(j)));
  maps.push_back(Vector::Ones(block.front().dims().k()));
  return maps;
}

NuBarReport nu_bar_mass_split(
    const std::vector<std::vector<DiagonalSample>>& word,
    const CurveSpec& curve, double delta, std::int64_t samples,
    std::uint64_t seed) {
  const Dims& d = curve.dims();
  const int k = d.k();
  const int n = static_cast<int>(word.size());
  if (n < 1 || n > 6 || k > 2) {
    throw DimensionError("nu_bar_mass_split: supported for 1 <= n <= 6, k <= 2");
  }
  if (!(delta >= 0.0) || samples < 1) {
    throw std::invalid_argument("nu_bar_mass_split: need delta >= 0, samples >= 1");
  }
  // Outer scalings theta_{k(i-1)}(abar) and inner block maps theta(a_i).
  std::vector<Vector> outer;
  std::vector<std::vector<Vector>> inner;
  std::vector<DiagonalSample> prefix;
  for (const auto& block : word) {
    if (static_cast<int>(block.size()) != k) {
      throw DimensionError("nu_bar_mass_split: each block needs k samples");
    }
    for (const auto& a : block) {
      if (!(a.dims() == d)) throw DimensionError("nu_bar_mass_split: dims mismatch");
    }
    outer.push_back(prefix.empty() ? Vector(Vector::Ones(k)) : theta(prefix));
    inner.push_back(theta_block(block));
    prefix.insert(prefix.end(), block.begin(), block.end());
  }

  NuBarReport r;
  r.samples = samples;
  r.block_mass.assign(n, 0.0);
  r.sample_mean = Vector::Zero(k);
  std::vector<std::int64_t> near(n, 0);
  std::vector<double> x(k);
  Stream rng(seed, 0, 0);
  for (std::int64_t s = 0; s < samples; ++s) {
    Vector point = Vector::Zero(k);
    for (int b = 0; b < n; ++b) {
      for (int i = 0; i < k; ++i) x[i] = rng.uniform();
      Vector phi_sum = Vector::Zero(k);
      for (int i = 0; i < k; ++i) {
        phi_sum += inner[b][i].cwiseProduct(curve.value(x[i]));
      }
      point += outer[b].cwiseProduct(phi_sum);

      // Distance to {F = 0} to first order: |F| / |grad_x F|.
      const Matrix m = f_psi_matrix(inner[b], x, curve);
      const double f = det_small(m);
      Vector grad(k);
      for (int j = 0; j < k; ++j) {
        Matrix mj = m;
        mj.col(j) = inner[b][j].cwiseProduct(curve.second_derivative(x[j]));
        grad[j] = det_small(mj);
      }
      const double gn = grad.norm();
      const double dist =
          gn > 0.0 ? std::abs(f) / gn
                   : (f == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
      if (dist < delta) ++near[b];
    }
    r.sample_mean += point;
  }
  r.sample_mean /= static_cast<double>(samples);
  r.product = 1.0;
  for (int b = 0; b < n; ++b) {
    r.block_mass[b] = static_cast<double>(near[b]) / static_cast<double>(samples);
    r.product *= r.block_mass[b];
  }
  return r;
}

}  // namespace horowalk
