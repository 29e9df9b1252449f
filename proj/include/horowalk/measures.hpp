#pragma once

// Step laws of the walk and the change-of-variables diagnostics for curve
// pushforwards.
//
// mu_A is a compactly supported law on log-coordinates of the diagonal
// group; mu_U is the pushforward of Lebesgue measure on [0,1] under a curve
// phi into U, optionally mixed with an auxiliary law mu_R.

#include "horowalk/group.hpp"
#include "horowalk/random.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace horowalk {

/// Polynomial curve phi : [0,1] -> R^k. Every shipped kind is stored as a
/// coefficient table (k rows, ascending powers of t).
class CurveSpec {
 public:
  enum class Kind { Moment, PlanarDemo, ConstantDemo, CustomPolynomial };

  static CurveSpec moment(Dims dims);
  /// phi(t) = (t, ..., t)
  static CurveSpec planar_demo(Dims dims);
  /// phi(t) = (1/2, ..., 1/2)
  static CurveSpec constant_demo(Dims dims);
  static CurveSpec custom_polynomial(Dims dims, Matrix coefficients);

  Kind kind() const { return kind_; }
  const Dims& dims() const { return dims_; }
  const Matrix& coefficients() const { return coeffs_; }
  /// Polynomials are C^infinity; reported, never enforced.
  static constexpr int smoothness() { return std::numeric_limits<int>::max(); }

  Vector value(double t) const;
  Vector derivative(double t) const;
  Vector second_derivative(double t) const;

  /// The curve t -> m * phi(t), as a custom polynomial.
  CurveSpec transformed(const Matrix& m) const;

  static std::string kind_name(Kind kind);
  static Kind kind_from_name(const std::string& name);

 private:
  CurveSpec(Kind kind, Dims dims, Matrix coeffs);
  Vector eval(double t, int order) const;

  Kind kind_;
  Dims dims_;
  Matrix coeffs_;
};

/// Independent compactly supported one-dimensional laws on the first k0-1
/// log-coordinates; the last coordinate is minus their sum.
class DiagonalLawSpec {
 public:
  enum class Kind { UniformBox, DiscreteTwoPoint };

  /// Throws std::invalid_argument if sizes mismatch, widths are negative or
  /// sum(means) != 0 beyond 1e-12. Non-expanding means are accepted and
  /// flagged; see expanding() and violations().
  DiagonalLawSpec(Dims dims, Vector means, Vector half_widths,
                  Kind kind = Kind::UniformBox);

  const Dims& dims() const { return dims_; }
  const Vector& means() const { return means_; }
  const Vector& half_widths() const { return widths_; }
  Kind kind() const { return kind_; }

  /// alpha_i - alpha_j > 0 for every i <= k1 < j.
  bool expanding() const { return violations_.empty(); }
  /// 1-based (i, j) pairs breaking the expansion condition.
  const std::vector<std::pair<int, int>>& violations() const {
    return violations_;
  }
  /// beta_{i,j} = (alpha_i - alpha_j) / 2, k1 x k2 block (0-based i, j-k1).
  const Matrix& beta() const { return beta_; }
  /// min |beta_{i,j}|
  double beta_min() const { return beta_min_; }

  static std::string kind_name(Kind kind);
  static Kind kind_from_name(const std::string& name);

 private:
  Dims dims_;
  Vector means_;
  Vector widths_;
  Kind kind_;
  Matrix beta_;
  double beta_min_ = 0.0;
  std::vector<std::pair<int, int>> violations_;
};

/// Auxiliary law mu_R of the mixture.
struct AuxiliaryLaw {
  enum class Kind { None, UniformBall, PointMass };
  Kind kind = Kind::None;
  double radius = 0.0;  // UniformBall
  Vector point;         // PointMass

  static std::string kind_name(Kind kind);
  static Kind kind_from_name(const std::string& name);
};

/// mu_U = u_*( c mu_R + (1 - c) phi_* lambda_[0,1] ).
class UnipotentLawSpec {
 public:
  /// c must lie in [0, 1]; c > 0 needs an auxiliary law of matching size.
  explicit UnipotentLawSpec(CurveSpec curve, double mixture = 0.0,
                            AuxiliaryLaw auxiliary = {});

  const CurveSpec& curve() const { return curve_; }
  double mixture() const { return mixture_; }
  const AuxiliaryLaw& auxiliary() const { return aux_; }
  const Dims& dims() const { return curve_.dims(); }

 private:
  CurveSpec curve_;
  double mixture_;
  AuxiliaryLaw aux_;
};

DiagonalSample sample_diag(const DiagonalLawSpec& spec, Stream& rng);
UnipotentParam sample_unipotent(const UnipotentLawSpec& spec, Stream& rng);

/// Uniform point in the Euclidean ball of the given radius in R^dim.
Vector sample_ball(int dim, double radius, Stream& rng);

/// det[ a_1 * phi'(x_1), ..., a_k * phi'(x_k) ], each a_i a diagonal map on
/// R^k given by its k coefficients.
double f_psi(std::span<const Vector> scalings, std::span<const double> x,
             const CurveSpec& curve);

struct NonplanarityReport {
  std::int64_t samples = 0;
  double zero_fraction = 0.0;
  double min_abs_det = 0.0;
  double q01 = 0.0;
  double q10 = 0.0;
  double q50 = 0.0;
};

/// Fraction of uniform tuples x in [0,1]^k with |F_psi(identity, x)| <= tol.
NonplanarityReport nonplanarity_check(const CurveSpec& curve,
                                      std::int64_t samples, double tol,
                                      std::uint64_t seed);

/// Box [lo, hi]^k split into `cells` equal cells per axis.
struct DensityGrid {
  double lo = 0.0;
  double hi = 1.0;
  int cells = 100;
};

struct DensityDiagnostic {
  DensityGrid grid;
  int dim = 1;
  std::int64_t samples = 0;
  /// Per-cell empirical mass (fraction of all samples), row-major for k=2.
  std::vector<double> histogram;
  /// Per-cell integral of the analytic density (0 in flagged cells).
  std::vector<double> analytic;
  /// Analytic density at each cell center.
  std::vector<double> center_density;
  std::vector<bool> flagged;
  double histogram_mass = 0.0;
  double escaped_mass = 0.0;
  double flagged_mass = 0.0;
  double analytic_mass = 0.0;
  int flagged_cells = 0;
  /// 1/2 sum over unflagged cells of |histogram - analytic|.
  double total_variation = 0.0;
};

/// Histogram of Psi_a(x) = sum_i a_i * phi(x_i) for uniform x against the
/// analytic density sum over preimages of 1/|F_psi|. Requires k <= 2.
DensityDiagnostic pushforward_density_check(std::span<const Vector> scalings,
                                            const CurveSpec& curve,
                                            const DensityGrid& grid,
                                            std::int64_t samples,
                                            std::uint64_t seed);

/// Analytic pushforward density of Psi_a at y for k = 1 (sum over monotone
/// pieces of 1/|a phi'(t)|).
double pushforward_density_1d(double scaling, const CurveSpec& curve, double y);

struct NuBarReport {
  /// Fraction of each block's parameters within delta of {F_psi = 0}.
  std::vector<double> block_mass;
  double product = 0.0;
  /// Mean of the sampled nu_abar points.
  Vector sample_mean;
  std::int64_t samples = 0;
};

/// Samples nu_abar for a word of n blocks of k diagonal samples and reports
/// the per-block mass near the zero set of F_psi. Requires n <= 6, k <= 2.
NuBarReport nu_bar_mass_split(
    const std::vector<std::vector<DiagonalSample>>& word,
    const CurveSpec& curve, double delta, std::int64_t samples,
    std::uint64_t seed);

/// theta(a_1..a_k) = (theta_{k-1}(a_1..a_{k-1}), ..., theta_1(a_1), e).
std::vector<Vector> theta_block(std::span<const DiagonalSample> block);

}  // namespace horowalk
