#pragma once

// Experiment configuration files and result files.
//
// Configs are JSON objects (comments allowed). Results are CSV with one
// header row plus a `<file>.meta.json` sidecar carrying provenance, or a
// single JSON document holding both.

#include "horowalk/walk.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace horowalk {

inline constexpr const char* kEngineVersion = "horowalk 0.1.0";

enum class Format { Csv, Json };

std::string format_name(Format f);
/// Throws std::invalid_argument for anything but "csv" / "json".
Format format_from_name(const std::string& name);

/// All problems found in a config, reported together.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct ExperimentConfig {
  Dims dims;
  Vector means;
  Vector widths;
  DiagonalLawSpec::Kind diagonal_kind = DiagonalLawSpec::Kind::UniformBox;
  CurveSpec::Kind curve_kind = CurveSpec::Kind::Moment;
  Matrix curve_coefficients;  // custom_polynomial only
  double mixture = 0.0;
  AuxiliaryLaw auxiliary;
  int steps = 40;
  int trials = 1000;
  std::uint64_t seed = 1;
  /// Empty means every step.
  std::vector<int> record;
  std::vector<Observable> observables;
  std::string output_directory = ".";
  Format format = Format::Csv;

  /// Defaults for the given dims: alpha_i = k2/k0 (i <= k1), -k1/k0 after;
  /// widths 0.2; moment curve; one siegel_count(R=1.5) observable.
  static ExperimentConfig defaults(Dims dims);

  CurveSpec curve() const;
  DiagonalLawSpec diagonal() const;
  UnipotentLawSpec unipotent() const;
  /// Record schedule with the "every step" default expanded.
  std::vector<int> record_schedule() const;
  WalkConfig walk(int threads = 0) const;

  /// Changes the step count; explicit record entries past the new count
  /// are dropped.
  void set_steps(int n);

  /// Throws ConfigError listing every problem.
  void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
/// Throws ConfigError (also for a missing or unreadable file).
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical JSON text: sorted keys, defaults filled in, no whitespace.
std::string canonical_config(const ExperimentConfig& cfg);
/// FNV-1a 64 of the canonical text without the output section, as 16 hex
/// digits. Where results are written does not change the experiment.
std::string config_hash(const ExperimentConfig& cfg);

// ------------------------------------------------------------------ results

enum class RecordKind { Estimate, Rate, Tail, Trace, Lyapunov, Density };

std::string record_kind_name(RecordKind k);
RecordKind record_kind_from_name(const std::string& name);
/// Comma-separated CSV header for the kind.
std::string csv_header(RecordKind k);

struct EstimateRecord {
  int n = 0;
  std::string observable;
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::int64_t trials = 0;
  std::int64_t aborted = 0;
  bool operator==(const EstimateRecord&) const = default;
};

/// Unfitted parameters are NaN (null in JSON).
struct RateRecord {
  std::string observable;
  double eta_hat = 0.0;
  double c_hat = 0.0;
  double r2 = 0.0;
  double eta_lo = 0.0;
  double eta_hi = 0.0;
  int n_min = 0;
  int n_max = 0;
};
bool operator==(const RateRecord& a, const RateRecord& b);

struct TailRecord {
  int n = 0;
  double prob = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  std::int64_t trials = 0;
  bool operator==(const TailRecord&) const = default;
};

/// aborted_at = 0 for completed trials.
struct TraceRecord {
  int trial = 0;
  int aborted_at = 0;
  std::int64_t excursions = 0;
  double final_shortest = 0.0;
  double max_det_drift = 0.0;
  bool operator==(const TraceRecord&) const = default;
};

/// Exponent -inf (underflow) is written as "-inf" / null.
struct LyapunovRecord {
  int trial = 0;
  int vector = 0;
  double exponent = 0.0;
};
bool operator==(const LyapunovRecord& a, const LyapunovRecord& b);

struct DensityRecord {
  int cell = 0;
  double lo = 0.0;
  double hi = 0.0;
  double histogram = 0.0;
  double analytic = 0.0;
  int flagged = 0;
  bool operator==(const DensityRecord&) const = default;
};

struct Provenance {
  std::string config_hash;
  std::string engine_version = kEngineVersion;
  std::uint64_t seed = 0;
  bool operator==(const Provenance&) const = default;
};

struct ResultFile {
  RecordKind kind = RecordKind::Estimate;
  Provenance provenance;
  std::vector<EstimateRecord> estimates;
  std::vector<RateRecord> rates;
  std::vector<TailRecord> tails;
  std::vector<TraceRecord> traces;
  std::vector<LyapunovRecord> lyapunov;
  std::vector<DensityRecord> density;

  /// Sorts rows into the canonical order (n then observable name, trial
  /// then vector, ...).
  void sort();
  bool operator==(const ResultFile&) const = default;
};

/// Sorts, then writes to a temporary sibling and renames into place. For
/// CSV the sidecar `<path>.meta.json` is written the same way.
void emit_results(ResultFile results, Format format,
                  const std::filesystem::path& path);

/// Reads a file written by emit_results. Throws std::runtime_error naming
/// the path when it is missing or malformed.
ResultFile load_results(const std::filesystem::path& path, Format format);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Decimal text with 17 significant digits; "nan", "inf", "-inf" otherwise.
std::string format_double(double x);

// --------------------------------------------------------------- converters

std::vector<EstimateRecord> estimate_records(const WalkConfig& cfg,
                                             const EnsembleResult& result);
std::vector<TraceRecord> trace_records(const EnsembleResult& result);
std::vector<EstimateRecord> birkhoff_records(const WalkConfig& cfg,
                                             const BirkhoffResult& result);

/// Row-major, 17 significant digits.
std::string serialize_lattice(const LatticePoint& p);
LatticePoint deserialize_lattice(Dims dims, const std::string& text);

}  // namespace horowalk
