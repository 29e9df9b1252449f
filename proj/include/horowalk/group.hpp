#pragma once

// Linear-algebra kernel for G = SL(k0, R): the diagonal group, the
// upper-block unipotent group U, conjugation bookkeeping and the adjoint
// action with its projection onto the Lie algebra of U.

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace horowalk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Block shape of the setup: k0 = k1 + k2, k = k1 * k2.
struct Dims {
  int k1 = 1;
  int k2 = 1;

  Dims() = default;
  Dims(int k1_, int k2_);

  int k0() const { return k1 + k2; }
  int k() const { return k1 * k2; }

  bool operator==(const Dims&) const = default;
};

inline constexpr double kDefaultDetTol = 1e-9;
inline constexpr double kDefaultTraceTol = 1e-9;

/// An element of SL(k0, R). Construction checks |det - 1| <= det_tol.
class GroupElement {
 public:
  GroupElement(Dims dims, Matrix entries, double det_tol = kDefaultDetTol);

  static GroupElement identity(Dims dims);

  const Dims& dims() const { return dims_; }
  const Matrix& entries() const { return entries_; }

  GroupElement operator*(const GroupElement& rhs) const;
  GroupElement inverse() const;

 private:
  struct Unchecked {};
  GroupElement(Dims dims, Matrix entries, Unchecked)
      : dims_(dims), entries_(std::move(entries)) {}

  Dims dims_;
  Matrix entries_;
};

/// Log-coordinates t of a = diag(e^{t_1}, ..., e^{t_k0}); sum(t) == 0.
class DiagonalSample {
 public:
  /// Takes the first k0-1 coordinates; the last is minus their sum.
  static DiagonalSample from_free(Dims dims, std::span<const double> free);
  /// Takes all k0 coordinates; the last one is overwritten with minus the
  /// sum of the others, so inputs must already sum to zero within 1e-12.
  static DiagonalSample from_log(Dims dims, std::span<const double> t);
  static DiagonalSample identity(Dims dims);

  const Dims& dims() const { return dims_; }
  const Vector& log_entries() const { return t_; }
  double operator[](int i) const { return t_[i]; }

  // The floors use the coordinates s of a = diag(e^{s_1}, ..., e^{s_k1},
  // e^{-s_{k1+1}}, ...), i.e. s_j = -t_j past k1.

  /// min_i s_i
  double floor() const;
  /// min over i <= k1 < j of s_i + s_j = t_i - t_j
  double dblfloor() const;

  GroupElement matrix() const;
  DiagonalSample inverse() const;

 private:
  DiagonalSample(Dims dims, Vector t) : dims_(dims), t_(std::move(t)) {}
  Dims dims_;
  Vector t_;
};

/// x in R^k, identified row-major with the k1 x k2 block M.
class UnipotentParam {
 public:
  UnipotentParam(Dims dims, Vector x);
  static UnipotentParam zero(Dims dims);

  const Dims& dims() const { return dims_; }
  const Vector& x() const { return x_; }
  /// Row-major k1 x k2 view.
  Matrix block() const;

  UnipotentParam operator+(const UnipotentParam& rhs) const;

 private:
  Dims dims_;
  Vector x_;
};

/// Traceless k0 x k0 matrix.
class LieAlgebraElement {
 public:
  LieAlgebraElement(Dims dims, Matrix entries,
                    double trace_tol = kDefaultTraceTol);

  const Dims& dims() const { return dims_; }
  const Matrix& entries() const { return entries_; }
  double norm() const { return entries_.norm(); }

 private:
  Dims dims_;
  Matrix entries_;
};

/// [[I, M], [0, I]]
GroupElement embed_u(const UnipotentParam& x);

/// Diagonal coefficients of C_a with a^{-1} u(x) a = u(C_a x). The entry
/// for block position (i, j) is exp(t_{k1+j} - t_i), stored row-major.
Vector conj_scaling(const DiagonalSample& a);

/// Coordinatewise product of conj_scaling over the list.
Vector theta(std::span<const DiagonalSample> as);

/// Product of diagonal elements; log-coordinates add.
DiagonalSample product_pi(std::span<const DiagonalSample> as);

/// g v g^{-1}
LieAlgebraElement ad_action(const GroupElement& g, const LieAlgebraElement& v);

/// Upper-right k1 x k2 block of v, row-major.
UnipotentParam q_project(const LieAlgebraElement& v);

/// Elementary matrix E_{ij} (0-based) as a Lie algebra element; i != j.
LieAlgebraElement elementary(Dims dims, int i, int j);

}  // namespace horowalk
