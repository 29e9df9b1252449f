#pragma once

// Random walk z_n = a_n u_n ... a_1 u_1 z_0 on unimodular lattices.
//
// Every trial owns the random streams (seed, trial, step); trials run in
// parallel and are merged in trial-index order, so aggregates are
// bit-identical for any thread count.

#include "horowalk/lattice.hpp"
#include "horowalk/measures.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace horowalk {

inline constexpr double kWalkDetTol = 1e-6;

struct WalkConfig {
  Dims dims;
  DiagonalLawSpec diagonal;
  UnipotentLawSpec unipotent;
  int steps = 1;
  int trials = 1;
  std::uint64_t seed = 1;
  LatticePoint start;
  std::vector<Observable> observables;
  /// Steps (1-based) at which observables are evaluated; sorted, unique.
  std::vector<int> record;
  /// 0 = hardware concurrency.
  int threads = 0;

  /// Checks n >= 1, T >= 1, schedule within {1..n}, dims agreement.
  void validate() const;
};

/// The law of one step; draws u first, then a, from Stream(seed, trial, step).
GroupElement sample_step(const WalkConfig& cfg, Stream& rng);

struct TrialTrace {
  int trial = 0;
  /// values[r][o]: observable o at record step cfg.record[r]. Rows after an
  /// abort are absent.
  std::vector<std::vector<double>> values;
  /// Steps (1-based) whose guarded reduction failed.
  std::vector<int> excursions;
  /// Step at which the trial was aborted, if any.
  std::optional<int> aborted_at;
  double final_shortest = 0.0;
  double max_det_drift = 0.0;

  bool operator==(const TrialTrace&) const = default;
};

/// Runs one trial; deterministic in (cfg, trial_index).
TrialTrace run_trial(const WalkConfig& cfg, int trial_index);

/// Sufficient statistics of one (step, observable) cell.
struct Moments {
  std::int64_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    ++count;
    sum += x;
    sum_sq += x * x;
  }
  void merge(const Moments& o) {
    count += o.count;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  double mean() const;
  /// Standard error of the mean; 0 for fewer than two values.
  double stderr_mean() const;
};

struct EstimatePoint {
  int n = 0;
  int observable = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::int64_t trials = 0;
  std::int64_t aborted = 0;
};

struct EnsembleResult {
  std::vector<TrialTrace> traces;
  /// moments[r][o] for record step r, observable o.
  std::vector<std::vector<Moments>> moments;
  /// aborted[r]: trials aborted at or before record step r.
  std::vector<std::int64_t> aborted;
  std::int64_t excursions = 0;

  /// Flattened (n, observable) series in record order.
  std::vector<EstimatePoint> series(const WalkConfig& cfg) const;
};

/// Runs cfg.trials trials. Throws std::runtime_error if every trial aborts.
EnsembleResult run_ensemble(const WalkConfig& cfg);

/// Calls fn(i) for i in [0, count) on `threads` workers (0 = hardware).
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

using Functional = std::function<double(const LatticePoint&)>;

struct BirkhoffResult {
  /// Logarithmic grid of n, ending at the trajectory length.
  std::vector<int> grid;
  /// averages[g][o] = (1/n) sum_{i<=n} f_o(z_i) for n = grid[g].
  std::vector<std::vector<double>> averages;
  /// Batch-means standard errors (autocorrelation-inflated), same shape.
  std::vector<std::vector<double>> stderrs;
  std::vector<int> excursions;
  std::optional<int> aborted_at;
};

/// One trajectory (trial 0) of `length` steps, every functional evaluated
/// at every step.
BirkhoffResult run_birkhoff(const WalkConfig& cfg, int length,
                            const std::vector<Functional>& functionals);
/// Same, with cfg.observables.
BirkhoffResult run_birkhoff(const WalkConfig& cfg, int length);

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means with floor(sqrt(n)) batches.
double batch_means_stderr(std::span<const double> values);

/// 1, 2, ..., roughly 10 points per decade, always including `length`.
std::vector<int> log_grid(int length);

}  // namespace horowalk
