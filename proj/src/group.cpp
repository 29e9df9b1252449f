#include "horowalk/group.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace horowalk {

Dims::Dims(int k1_, int k2_) : k1(k1_), k2(k2_) {
  if (k1 < 1 || k2 < 1) {
    throw DimensionError("Dims: k1 and k2 must be positive (got " +
                         std::to_string(k1) + ", " + std::to_string(k2) + ")");
  }
}

namespace {

void require_square(const Dims& dims, const Matrix& m, const char* what) {
  if (m.rows() != dims.k0() || m.cols() != dims.k0()) {
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(dims.k0()) + "x" +
                         std::to_string(dims.k0()) + " matrix");
  }
}

void require_same(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) throw DimensionError(std::string(what) + ": dims mismatch");
}

}  // namespace

GroupElement::GroupElement(Dims dims, Matrix entries, double det_tol)
    : dims_(dims), entries_(std::move(entries)) {
  require_square(dims_, entries_, "GroupElement");
  const double det = entries_.determinant();
  if (!(std::abs(det - 1.0) <= det_tol)) {
    throw std::domain_error("GroupElement: det = " + std::to_string(det) +
                            " is not 1");
  }
}

GroupElement GroupElement::identity(Dims dims) {
  return {dims, Matrix::Identity(dims.k0(), dims.k0()), Unchecked{}};
}

GroupElement GroupElement::operator*(const GroupElement& rhs) const {
  require_same(dims_, rhs.dims_, "GroupElement::operator*");
  return {dims_, entries_ * rhs.entries_, Unchecked{}};
}

GroupElement GroupElement::inverse() const {
  Eigen::FullPivLU<Matrix> lu(entries_);
  if (!lu.isInvertible()) {
    throw std::domain_error("GroupElement::inverse: matrix is singular");
  }
  return {dims_, lu.inverse(), Unchecked{}};
}

DiagonalSample DiagonalSample::from_free(Dims dims,
                                         std::span<const double> free) {
  const int k0 = dims.k0();
  if (static_cast<int>(free.size()) != k0 - 1) {
    throw DimensionError("DiagonalSample: expected " + std::to_string(k0 - 1) +
                         " free coordinates");
  }
  Vector t(k0);
  double sum = 0.0;
  for (int i = 0; i + 1 < k0; ++i) {
    t[i] = free[i];
    sum += free[i];
  }
  t[k0 - 1] = -sum;
  return {dims, std::move(t)};
}

DiagonalSample DiagonalSample::from_log(Dims dims, std::span<const double> t) {
  if (static_cast<int>(t.size()) != dims.k0()) {
    throw DimensionError("DiagonalSample: expected " +
                         std::to_string(dims.k0()) + " log coordinates");
  }
  double total = 0.0, scale = 1.0;
  for (double v : t) {
    total += v;
    scale = std::max(scale, std::abs(v));
  }
  if (std::abs(total) > 1e-12 * scale) {
    throw std::domain_error("DiagonalSample: log coordinates must sum to 0");
  }
  return from_free(dims, t.first(t.size() - 1));
}

DiagonalSample DiagonalSample::identity(Dims dims) {
  return {dims, Vector::Zero(dims.k0())};
}

double DiagonalSample::floor() const {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dims_.k0(); ++i) {
    best = std::min(best, i < dims_.k1 ? t_[i] : -t_[i]);
  }
  return best;
}

double DiagonalSample::dblfloor() const {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dims_.k1; ++i) {
    for (int j = dims_.k1; j < dims_.k0(); ++j) {
      best = std::min(best, t_[i] - t_[j]);
    }
  }
  return best;
}

GroupElement DiagonalSample::matrix() const {
  // det = exp(sum t) = 1 up to rounding of exp; checked with the default tol.
  return GroupElement(dims_, Matrix(t_.array().exp().matrix().asDiagonal()));
}

DiagonalSample DiagonalSample::inverse() const {
  Vector neg = -t_;
  return {dims_, std::move(neg)};
}

UnipotentParam::UnipotentParam(Dims dims, Vector x)
    : dims_(dims), x_(std::move(x)) {
  if (x_.size() != dims_.k()) {
    throw DimensionError("UnipotentParam: expected length " +
                         std::to_string(dims_.k()));
  }
}

UnipotentParam UnipotentParam::zero(Dims dims) {
  return {dims, Vector::Zero(dims.k())};
}

Matrix UnipotentParam::block() const {
  Matrix m(dims_.k1, dims_.k2);
  for (int i = 0; i < dims_.k1; ++i) {
    for (int j = 0; j < dims_.k2; ++j) m(i, j) = x_[i * dims_.k2 + j];
  }
  return m;
}

UnipotentParam UnipotentParam::operator+(const UnipotentParam& rhs) const {
  require_same(dims_, rhs.dims_, "UnipotentParam::operator+");
  return {dims_, x_ + rhs.x_};
}

LieAlgebraElement::LieAlgebraElement(Dims dims, Matrix entries,
                                     double trace_tol)
    : dims_(dims), entries_(std::move(entries)) {
  require_square(dims_, entries_, "LieAlgebraElement");
  if (!(std::abs(entries_.trace()) <= trace_tol)) {
    throw std::domain_error("LieAlgebraElement: trace must be 0");
  }
}

GroupElement embed_u(const UnipotentParam& x) {
  const Dims& d = x.dims();
  Matrix m = Matrix::Identity(d.k0(), d.k0());
  m.topRightCorner(d.k1, d.k2) = x.block();
  return GroupElement(d, std::move(m));
}

Vector conj_scaling(const DiagonalSample& a) {
  const Dims& d = a.dims();
  Vector c(d.k());
  for (int i = 0; i < d.k1; ++i) {
    for (int j = 0; j < d.k2; ++j) {
      c[i * d.k2 + j] = std::exp(a[d.k1 + j] - a[i]);
    }
  }
  return c;
}

Vector theta(std::span<const DiagonalSample> as) {
  if (as.empty()) throw std::invalid_argument("theta: empty list");
  // Sum exponents first so long products do not overflow term by term.
  const Dims& d = as.front().dims();
  Vector log_c = Vector::Zero(d.k());
  for (const auto& a : as) {
    require_same(d, a.dims(), "theta");
    for (int i = 0; i < d.k1; ++i) {
      for (int j = 0; j < d.k2; ++j) log_c[i * d.k2 + j] += a[d.k1 + j] - a[i];
    }
  }
  return log_c.array().exp().matrix();
}

DiagonalSample product_pi(std::span<const DiagonalSample> as) {
  if (as.empty()) throw std::invalid_argument("product_pi: empty list");
  const Dims& d = as.front().dims();
  Vector sum = Vector::Zero(d.k0());
  for (const auto& a : as) {
    require_same(d, a.dims(), "product_pi");
    sum += a.log_entries();
  }
  return DiagonalSample::from_free(
      d, std::span<const double>(sum.data(), static_cast<size_t>(d.k0() - 1)));
}

LieAlgebraElement ad_action(const GroupElement& g,
                            const LieAlgebraElement& v) {
  require_same(g.dims(), v.dims(), "ad_action");
  const GroupElement g_inv = g.inverse();
  Matrix out = g.entries() * v.entries() * g_inv.entries();
  // Conjugation preserves the trace; rounding drift is allowed up to 1e-9
  // relative to the size of the result.
  const double tol = 1e-9 * std::max(1.0, out.norm());
  return LieAlgebraElement(v.dims(), std::move(out), tol);
}

UnipotentParam q_project(const LieAlgebraElement& v) {
  const Dims& d = v.dims();
  Vector x(d.k());
  for (int i = 0; i < d.k1; ++i) {
    for (int j = 0; j < d.k2; ++j) x[i * d.k2 + j] = v.entries()(i, d.k1 + j);
  }
  return {d, std::move(x)};
}

LieAlgebraElement elementary(Dims dims, int i, int j) {
  if (i == j || i < 0 || j < 0 || i >= dims.k0() || j >= dims.k0()) {
    throw DimensionError("elementary: need distinct in-range indices");
  }
  Matrix m = Matrix::Zero(dims.k0(), dims.k0());
  m(i, j) = 1.0;
  return {dims, std::move(m)};
}

}  // namespace horowalk
