#pragma once

// Points of X = SL(k0,R)/SL(k0,Z) stored as unimodular bases, LLL
// reduction as the coset representative, and lattice functionals with
// computable Haar means.

#include "horowalk/group.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace horowalk {

/// Raised when the Gram matrix is too ill-conditioned to reduce.
class ReductionError : public std::runtime_error {
 public:
  ReductionError(const std::string& what, Matrix basis)
      : std::runtime_error(what), basis_(std::move(basis)) {}
  const Matrix& basis() const { return basis_; }

 private:
  Matrix basis_;
};

/// Raised when enumeration visits more nodes than its budget. No partial
/// count is returned.
class EnumerationBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kLovaszDelta = 0.75;
inline constexpr double kMaxGramCondition = 1e14;
inline constexpr std::uint64_t kEnumerationBudget = 10'000'000;

class LatticePoint {
 public:
  /// Columns of `basis` generate the lattice. |det| must be 1 within det_tol.
  LatticePoint(Dims dims, Matrix basis, double det_tol = kDefaultDetTol);

  static LatticePoint standard(Dims dims);

  const Dims& dims() const { return dims_; }
  const Matrix& basis() const { return basis_; }
  bool reduced() const { return reduced_; }

  /// |det(basis)| - 1
  double det_drift() const;

 private:
  friend struct LatticeAccess;
  struct Unchecked {};
  LatticePoint(Dims dims, Matrix basis, bool reduced, Unchecked)
      : dims_(dims), basis_(std::move(basis)), reduced_(reduced) {}

  Dims dims_;
  Matrix basis_;
  bool reduced_ = false;
};

struct Reduction {
  LatticePoint point;
  Matrix transform;  // integer entries, |det| = 1, point.basis = input * T
};

/// LLL with delta = 0.75 and size reduction |mu_ij| <= 1/2.
/// Throws ReductionError if the Gram condition number exceeds 1e14.
Reduction reduce_with_transform(const LatticePoint& p);
LatticePoint reduce(const LatticePoint& p);

/// Same reduction without the conditioning guard. Used to continue a walk
/// after a flagged excursion; still throws if the basis is not finite.
LatticePoint reduce_unguarded(const LatticePoint& p);

/// True if the reduced basis satisfies size reduction and the Lovasz
/// condition (with a small floating-point slack).
bool is_lll_reduced(const Matrix& basis, double delta = kLovaszDelta);

/// Ratio of extreme eigenvalues of B^T B.
double gram_condition(const Matrix& basis);

double shortest_vector_len(const LatticePoint& p,
                           std::uint64_t budget = kEnumerationBudget);

/// #{v in lattice \ {0} : |v| <= radius}.
std::int64_t siegel_count(const LatticePoint& p, double radius,
                          std::uint64_t budget = kEnumerationBudget);

/// rho(s) = exp(1 - 1/(1 - s^2)) for |s| < 1, else 0.
double bump_profile(double s);

double shortest_bump(const LatticePoint& p, double center, double width);

/// g * basis, unreduced.
LatticePoint translate(const GroupElement& g, const LatticePoint& p);

/// g * basis, then reduce.
LatticePoint apply(const GroupElement& g, const LatticePoint& p);

/// True if both bases generate the same lattice: B_p^{-1} B_q is integral
/// within tol (relative to its largest entry) with |det| = 1.
bool same_lattice(const LatticePoint& p, const LatticePoint& q,
                  double tol = 1e-8);

/// Gram matrix of the Minkowski-reduced basis (each column the shortest
/// vector extending the previous ones to a basis, ties broken by
/// coordinates, signs normalized). Equal for any two bases of one lattice.
Matrix sorted_gram(const LatticePoint& p);

/// Lattice functional evaluated along walks.
struct Observable {
  enum class Kind { SiegelCount, ShortestBump, ShortestLog };

  Kind kind = Kind::SiegelCount;
  double radius = 1.5;  // SiegelCount
  double center = 1.0;  // ShortestBump
  double width = 0.5;   // ShortestBump

  static Observable siegel(double radius);
  static Observable bump(double center, double width);
  static Observable shortest_log();

  /// Validates radius / width positivity.
  void validate() const;

  /// Stable identifier used in output files, e.g. "siegel_count(R=1.5)".
  std::string name() const;

  /// Evaluates on a reduced point.
  double evaluate(const LatticePoint& p) const;

  bool operator==(const Observable&) const = default;
};

/// Volume of the Euclidean ball of the given radius in R^dim.
double ball_volume(int dim, double radius);

/// Exact Haar mean when one is available: Siegel counts in every dimension,
/// shortest-vector functionals for k0 = 2 by quadrature over the modular
/// fundamental domain.
std::optional<double> haar_mean(const Observable& obs, const Dims& dims);

}  // namespace horowalk
