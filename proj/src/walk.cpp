#include "horowalk/walk.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace horowalk {

void WalkConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("walk: steps must be >= 1");
  if (trials < 1) throw std::invalid_argument("walk: trials must be >= 1");
  if (!(diagonal.dims() == dims) || !(unipotent.dims() == dims) ||
      !(start.dims() == dims)) {
    throw DimensionError("walk: component dims disagree");
  }
  for (size_t i = 0; i < record.size(); ++i) {
    if (record[i] < 1 || record[i] > steps) {
      throw std::invalid_argument("walk: record step " +
                                  std::to_string(record[i]) +
                                  " outside 1.." + std::to_string(steps));
    }
    if (i > 0 && record[i] <= record[i - 1]) {
      throw std::invalid_argument("walk: record schedule must be increasing");
    }
  }
  for (const auto& o : observables) o.validate();
}

GroupElement sample_step(const WalkConfig& cfg, Stream& rng) {
  const UnipotentParam u = sample_unipotent(cfg.unipotent, rng);
  const DiagonalSample a = sample_diag(cfg.diagonal, rng);
  return a.matrix() * embed_u(u);
}

namespace {

// Advances z by one step. Returns false if the trial must abort.
bool advance(const GroupElement& g, LatticePoint& z,
             int step, TrialTrace& trace) {
  const LatticePoint raw = translate(g, z);
  try {
    z = reduce(raw);
  } catch (const ReductionError&) {
    trace.excursions.push_back(step);
    try {
      z = reduce_unguarded(raw);
    } catch (const ReductionError&) {
      return false;
    }
  }
  const double drift = std::abs(z.det_drift());
  trace.max_det_drift = std::max(trace.max_det_drift, drift);
  return drift <= kWalkDetTol;
}

}  // namespace

TrialTrace run_trial(const WalkConfig& cfg, int trial_index) {
  TrialTrace trace;
  trace.trial = trial_index;
  LatticePoint z = cfg.start.reduced() ? cfg.start : reduce(cfg.start);
  size_t next_record = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    Stream rng(cfg.seed, static_cast<std::uint64_t>(trial_index),
               static_cast<std::uint64_t>(step));
    const GroupElement g = sample_step(cfg, rng);
    if (!advance(g, z, step, trace)) {
      trace.aborted_at = step;
      return trace;
    }
    if (next_record < cfg.record.size() && cfg.record[next_record] == step) {
      std::vector<double> row;
      row.reserve(cfg.observables.size());
      try {
        for (const auto& o : cfg.observables) row.push_back(o.evaluate(z));
      } catch (const EnumerationBudgetError&) {
        trace.aborted_at = step;
        return trace;
      }
      trace.values.push_back(std::move(row));
      ++next_record;
    }
  }
  try {
    trace.final_shortest = shortest_vector_len(z);
  } catch (const EnumerationBudgetError&) {
    trace.final_shortest = 0.0;
  }
  return trace;
}

double Moments::mean() const {
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

double Moments::stderr_mean() const {
  if (count < 2) return 0.0;
  const double n = static_cast<double>(count);
  const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  return std::sqrt(var / n);
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  threads = std::min(threads, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

EnsembleResult run_ensemble(const WalkConfig& cfg) {
  cfg.validate();
  EnsembleResult out;
  out.traces.resize(cfg.trials);
  parallel_for(cfg.trials, cfg.threads,
               [&](int i) { out.traces[i] = run_trial(cfg, i); });

  const size_t records = cfg.record.size();
  const size_t obs = cfg.observables.size();
  out.moments.assign(records, std::vector<Moments>(obs));
  out.aborted.assign(records, 0);
  std::int64_t all_aborted = 0;
  // Merge in trial-index order.
  for (const auto& t : out.traces) {
    out.excursions += static_cast<std::int64_t>(t.excursions.size());
    if (t.aborted_at) ++all_aborted;
    for (size_t r = 0; r < records; ++r) {
      if (r < t.values.size()) {
        for (size_t o = 0; o < obs; ++o) out.moments[r][o].add(t.values[r][o]);
      } else if (t.aborted_at && *t.aborted_at <= cfg.record[r]) {
        ++out.aborted[r];
      }
    }
  }
  if (all_aborted == cfg.trials) {
    throw std::runtime_error("walk: all " + std::to_string(cfg.trials) +
                             " trials aborted");
  }
  return out;
}

std::vector<EstimatePoint> EnsembleResult::series(const WalkConfig& cfg) const {
  std::vector<EstimatePoint> pts;
  for (size_t r = 0; r < moments.size(); ++r) {
    for (size_t o = 0; o < moments[r].size(); ++o) {
      const Moments& m = moments[r][o];
      pts.push_back({cfg.record[r], static_cast<int>(o), m.mean(),
                     m.stderr_mean(), m.count, aborted[r]});
    }
  }
  return pts;
}

double batch_means_stderr(std::span<const double> values) {
  const size_t n = values.size();
  const size_t batches = static_cast<size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  if (batches < 2) return 0.0;
  const size_t size = n / batches;
  std::vector<double> means(batches, 0.0);
  for (size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (size_t i = 0; i < size; ++i) s += values[b * size + i];
    means[b] = s / static_cast<double>(size);
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= static_cast<double>(batches);
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu);
  var /= static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

std::vector<int> log_grid(int length) {
  std::vector<int> grid;
  for (int j = 0;; ++j) {
    const double v = std::round(std::pow(10.0, j / 10.0));
    if (v >= length) break;
    const int n = static_cast<int>(v);
    if (grid.empty() || grid.back() != n) grid.push_back(n);
  }
  if (length >= 1) grid.push_back(length);
  return grid;
}

BirkhoffResult run_birkhoff(const WalkConfig& cfg, int length,
                            const std::vector<Functional>& functionals) {
  if (length < 1) throw std::invalid_argument("birkhoff: length must be >= 1");
  WalkConfig one = cfg;
  one.steps = length;
  one.trials = 1;
  one.record.clear();
  one.validate();

  BirkhoffResult out;
  TrialTrace trace;
  const size_t nf = functionals.size();
  std::vector<std::vector<double>> series(nf);
  for (auto& s : series) s.reserve(static_cast<size_t>(length));

  LatticePoint z = cfg.start.reduced() ? cfg.start : reduce(cfg.start);
  int completed = 0;
  for (int step = 1; step <= length; ++step) {
    Stream rng(cfg.seed, 0, static_cast<std::uint64_t>(step));
    const GroupElement g = sample_step(one, rng);
    if (!advance(g, z, step, trace)) {
      out.aborted_at = step;
      break;
    }
    try {
      std::vector<double> row(nf);
      for (size_t f = 0; f < nf; ++f) row[f] = functionals[f](z);
      for (size_t f = 0; f < nf; ++f) series[f].push_back(row[f]);
    } catch (const EnumerationBudgetError&) {
      out.aborted_at = step;
      break;
    }
    completed = step;
  }
  out.excursions = trace.excursions;

  std::vector<double> prefix(nf, 0.0);
  std::vector<int> grid = log_grid(completed);
  size_t g = 0;
  for (int n = 1; n <= completed && g < grid.size(); ++n) {
    for (size_t f = 0; f < nf; ++f) prefix[f] += series[f][n - 1];
    if (n != grid[g]) continue;
    std::vector<double> avg(nf), se(nf);
    for (size_t f = 0; f < nf; ++f) {
      avg[f] = prefix[f] / n;
      se[f] = batch_means_stderr(std::span<const double>(series[f].data(), n));
    }
    out.grid.push_back(n);
    out.averages.push_back(std::move(avg));
    out.stderrs.push_back(std::move(se));
    ++g;
  }
  return out;
}

BirkhoffResult run_birkhoff(const WalkConfig& cfg, int length) {
  std::vector<Functional> fns;
  for (const auto& o : cfg.observables) {
    fns.emplace_back([o](const LatticePoint& p) { return o.evaluate(p); });
  }
  return run_birkhoff(cfg, length, fns);
}

}  // namespace horowalk
