#include "horowalk/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unistd.h>

namespace horowalk {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string format_name(Format f) { return f == Format::Csv ? "csv" : "json"; }

Format format_from_name(const std::string& name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  throw std::invalid_argument("unknown format '" + name + "' (csv|json)");
}

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string s = "invalid config:";
  for (const auto& e : errors) s += "\n  " + e;
  return s;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

// ------------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::defaults(Dims dims) {
  ExperimentConfig c;
  c.dims = dims;
  const int k0 = dims.k0();
  c.means = Vector(k0);
  for (int i = 0; i < k0; ++i) {
    c.means[i] = i < dims.k1 ? static_cast<double>(dims.k2) / k0
                             : -static_cast<double>(dims.k1) / k0;
  }
  c.widths = Vector::Constant(k0, 0.2);
  c.observables = {Observable::siegel(1.5)};
  return c;
}

CurveSpec ExperimentConfig::curve() const {
  switch (curve_kind) {
    case CurveSpec::Kind::Moment: return CurveSpec::moment(dims);
    case CurveSpec::Kind::PlanarDemo: return CurveSpec::planar_demo(dims);
    case CurveSpec::Kind::ConstantDemo: return CurveSpec::constant_demo(dims);
    case CurveSpec::Kind::CustomPolynomial:
      return CurveSpec::custom_polynomial(dims, curve_coefficients);
  }
  throw std::logic_error("unreachable curve kind");
}

DiagonalLawSpec ExperimentConfig::diagonal() const {
  return DiagonalLawSpec(dims, means, widths, diagonal_kind);
}

UnipotentLawSpec ExperimentConfig::unipotent() const {
  return UnipotentLawSpec(curve(), mixture, auxiliary);
}

std::vector<int> ExperimentConfig::record_schedule() const {
  if (!record.empty()) return record;
  std::vector<int> all(static_cast<size_t>(std::max(steps, 0)));
  for (int i = 0; i < steps; ++i) all[i] = i + 1;
  return all;
}

WalkConfig ExperimentConfig::walk(int threads) const {
  validate();
  return WalkConfig{dims,        diagonal(), unipotent(),          steps,
                    trials,      seed,       LatticePoint::standard(dims),
                    observables, record_schedule(), threads};
}

void ExperimentConfig::set_steps(int n) {
  steps = n;
  std::erase_if(record, [n](int r) { return r > n; });
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errors;
  const int k0 = dims.k0();
  const bool sizes_ok = means.size() == k0 && widths.size() == k0;
  if (means.size() != k0) {
    errors.push_back("diagonal.means: need k0 = " + std::to_string(k0) +
                     " entries, got " + std::to_string(means.size()));
  }
  if (widths.size() != k0) {
    errors.push_back("diagonal.widths: need k0 = " + std::to_string(k0) +
                     " entries, got " + std::to_string(widths.size()));
  }
  if (sizes_ok) {
    if (!means.allFinite() || !widths.allFinite()) {
      errors.push_back("diagonal: non-finite parameter");
    }
    if ((widths.array() < 0.0).any()) {
      errors.push_back("diagonal.widths: must be nonnegative");
    }
    const double scale = std::max(1.0, means.cwiseAbs().maxCoeff());
    if (std::abs(means.sum()) > 1e-12 * scale) {
      std::ostringstream os;
      os << "diagonal.means: zero-sum constraint violated (sum = "
         << format_double(means.sum()) << ")";
      errors.push_back(os.str());
    }
    for (int i = 0; i < dims.k1; ++i) {
      for (int j = dims.k1; j < k0; ++j) {
        if (!(means[i] - means[j] > 0.0)) {
          errors.push_back(
              "diagonal.means: not asymptotically U-expanding, alpha_i - "
              "alpha_j = " + format_double(means[i] - means[j]) +
              " <= 0 at (i,j) = (" + std::to_string(i + 1) + "," +
              std::to_string(j + 1) + ")");
        }
      }
    }
  }
  try {
    (void)curve();
  } catch (const std::exception& e) {
    errors.push_back(std::string("unipotent.curve: ") + e.what());
  }
  if (!(mixture >= 0.0 && mixture < 1.0)) {
    errors.push_back("unipotent.mixture: must lie in [0, 1)");
  } else {
    try {
      (void)UnipotentLawSpec(CurveSpec::moment(dims), mixture, auxiliary);
    } catch (const std::exception& e) {
      errors.push_back(std::string("unipotent.auxiliary: ") + e.what());
    }
  }
  if (steps < 1) errors.push_back("walk.steps: must be >= 1");
  if (trials < 1) errors.push_back("walk.trials: must be >= 1");
  for (size_t i = 0; i < record.size(); ++i) {
    if (record[i] < 1 || record[i] > steps) {
      errors.push_back("walk.record: step " + std::to_string(record[i]) +
                       " outside 1.." + std::to_string(steps));
    } else if (i > 0 && record[i] <= record[i - 1]) {
      errors.push_back("walk.record: schedule must be strictly increasing");
    }
  }
  if (observables.empty()) errors.push_back("observables: list is empty");
  for (size_t i = 0; i < observables.size(); ++i) {
    try {
      observables[i].validate();
    } catch (const std::exception& e) {
      errors.push_back("observables[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

namespace {

class Reader {
 public:
  std::vector<std::string> errors;

  void keys(const json& obj, const std::string& where,
            std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
      if (std::none_of(allowed.begin(), allowed.end(),
                       [&](const char* a) { return key == a; })) {
        errors.push_back(where + ": unknown key '" + key + "'");
      }
    }
  }

  const json* object(const json& parent, const char* key,
                     const std::string& where) {
    if (!parent.contains(key)) return nullptr;
    const json& v = parent.at(key);
    if (!v.is_object()) {
      errors.push_back(where + ": expected an object");
      return nullptr;
    }
    return &v;
  }

  std::optional<double> number(const json& v, const std::string& where) {
    if (!v.is_number()) {
      errors.push_back(where + ": expected a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<std::int64_t> integer(const json& v, const std::string& where) {
    if (!v.is_number_integer()) {
      errors.push_back(where + ": expected an integer");
      return std::nullopt;
    }
    return v.get<std::int64_t>();
  }

  std::optional<std::string> string(const json& v, const std::string& where) {
    if (!v.is_string()) {
      errors.push_back(where + ": expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<Vector> vector(const json& v, const std::string& where) {
    if (!v.is_array()) {
      errors.push_back(where + ": expected an array of numbers");
      return std::nullopt;
    }
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) {
      auto x = number(v[i], where + "[" + std::to_string(i) + "]");
      if (!x) return std::nullopt;
      out[static_cast<Eigen::Index>(i)] = *x;
    }
    return out;
  }

  // Converts kind names, turning the library exception into an error entry.
  template <class F>
  void kind(const json& v, const std::string& where, F&& assign) {
    auto s = string(v, where);
    if (!s) return;
    try {
      assign(*s);
    } catch (const std::invalid_argument& e) {
      errors.push_back(where + ": " + e.what());
    }
  }
};

Dims read_dims(const json& root, Reader& r) {
  Dims dims;
  const json* d = r.object(root, "dims", "dims");
  if (!d) return dims;
  r.keys(*d, "dims", {"k1", "k2"});
  int k1 = 1, k2 = 1;
  if (d->contains("k1")) {
    if (auto v = r.integer(d->at("k1"), "dims.k1")) k1 = static_cast<int>(*v);
  }
  if (d->contains("k2")) {
    if (auto v = r.integer(d->at("k2"), "dims.k2")) k2 = static_cast<int>(*v);
  }
  if (k1 < 1 || k2 < 1 || k1 > 16 || k2 > 16) {
    r.errors.push_back("dims: k1 and k2 must lie in 1..16");
    return dims;
  }
  return Dims(k1, k2);
}

void read_diagonal(const json& root, ExperimentConfig& c, Reader& r) {
  const json* d = r.object(root, "diagonal", "diagonal");
  if (!d) return;
  r.keys(*d, "diagonal", {"means", "widths", "kind"});
  if (d->contains("means")) {
    if (auto v = r.vector(d->at("means"), "diagonal.means")) c.means = *v;
  }
  if (d->contains("widths")) {
    const json& w = d->at("widths");
    if (w.is_number()) {
      c.widths = Vector::Constant(c.dims.k0(), w.get<double>());
    } else if (auto v = r.vector(w, "diagonal.widths")) {
      c.widths = *v;
    }
  }
  if (d->contains("kind")) {
    r.kind(d->at("kind"), "diagonal.kind", [&](const std::string& s) {
      c.diagonal_kind = DiagonalLawSpec::kind_from_name(s);
    });
  }
}

void read_unipotent(const json& root, ExperimentConfig& c, Reader& r) {
  const json* u = r.object(root, "unipotent", "unipotent");
  if (!u) return;
  r.keys(*u, "unipotent", {"curve", "mixture", "auxiliary"});
  if (const json* cv = r.object(*u, "curve", "unipotent.curve")) {
    r.keys(*cv, "unipotent.curve", {"kind", "coefficients"});
    if (cv->contains("kind")) {
      r.kind(cv->at("kind"), "unipotent.curve.kind", [&](const std::string& s) {
        c.curve_kind = CurveSpec::kind_from_name(s);
      });
    }
    if (cv->contains("coefficients")) {
      const json& rows = cv->at("coefficients");
      const std::string where = "unipotent.curve.coefficients";
      if (!rows.is_array() || rows.empty()) {
        r.errors.push_back(where + ": expected a non-empty array of rows");
      } else {
        std::vector<Vector> parsed;
        for (size_t i = 0; i < rows.size(); ++i) {
          auto row = r.vector(rows[i], where + "[" + std::to_string(i) + "]");
          if (!row) return;
          parsed.push_back(*row);
        }
        const Eigen::Index cols = parsed.front().size();
        for (const auto& row : parsed) {
          if (row.size() != cols || cols == 0) {
            r.errors.push_back(where + ": rows must have equal, nonzero length");
            return;
          }
        }
        c.curve_coefficients = Matrix(static_cast<Eigen::Index>(parsed.size()), cols);
        for (size_t i = 0; i < parsed.size(); ++i) {
          c.curve_coefficients.row(static_cast<Eigen::Index>(i)) = parsed[i].transpose();
        }
      }
    }
    if (c.curve_kind == CurveSpec::Kind::CustomPolynomial &&
        c.curve_coefficients.size() == 0 && !cv->contains("coefficients")) {
      r.errors.push_back("unipotent.curve: custom_polynomial needs coefficients");
    }
    if (c.curve_kind != CurveSpec::Kind::CustomPolynomial &&
        cv->contains("coefficients")) {
      r.errors.push_back(
          "unipotent.curve: coefficients only apply to custom_polynomial");
    }
  }
  if (u->contains("mixture")) {
    if (auto v = r.number(u->at("mixture"), "unipotent.mixture")) c.mixture = *v;
  }
  if (const json* a = r.object(*u, "auxiliary", "unipotent.auxiliary")) {
    r.keys(*a, "unipotent.auxiliary", {"kind", "radius", "point"});
    if (a->contains("kind")) {
      r.kind(a->at("kind"), "unipotent.auxiliary.kind", [&](const std::string& s) {
        c.auxiliary.kind = AuxiliaryLaw::kind_from_name(s);
      });
    }
    if (a->contains("radius")) {
      if (auto v = r.number(a->at("radius"), "unipotent.auxiliary.radius")) {
        c.auxiliary.radius = *v;
      }
    }
    if (a->contains("point")) {
      if (auto v = r.vector(a->at("point"), "unipotent.auxiliary.point")) {
        c.auxiliary.point = *v;
      }
    }
  }
}

void read_walk(const json& root, ExperimentConfig& c, Reader& r) {
  const json* w = r.object(root, "walk", "walk");
  if (!w) return;
  r.keys(*w, "walk", {"steps", "trials", "seed", "record"});
  auto small_int = [&](const char* key, int& out) {
    if (!w->contains(key)) return;
    const std::string where = std::string("walk.") + key;
    if (auto v = r.integer(w->at(key), where)) {
      if (*v < 1 || *v > std::numeric_limits<int>::max()) {
        r.errors.push_back(where + ": must be a positive integer");
      } else {
        out = static_cast<int>(*v);
      }
    }
  };
  small_int("steps", c.steps);
  small_int("trials", c.trials);
  if (w->contains("seed")) {
    const json& s = w->at("seed");
    if (s.is_number_unsigned()) {
      c.seed = s.get<std::uint64_t>();
    } else {
      r.errors.push_back("walk.seed: expected a nonnegative integer");
    }
  }
  if (w->contains("record")) {
    const json& rec = w->at("record");
    if (!rec.is_array()) {
      r.errors.push_back("walk.record: expected an array of steps");
    } else {
      for (size_t i = 0; i < rec.size(); ++i) {
        if (auto v = r.integer(rec[i], "walk.record[" + std::to_string(i) + "]")) {
          c.record.push_back(static_cast<int>(std::clamp<std::int64_t>(
              *v, std::numeric_limits<int>::min(), std::numeric_limits<int>::max())));
        }
      }
    }
  }
}

void read_observables(const json& root, ExperimentConfig& c, Reader& r) {
  if (!root.contains("observables")) return;
  const json& list = root.at("observables");
  if (!list.is_array()) {
    r.errors.push_back("observables: expected an array");
    return;
  }
  c.observables.clear();
  for (size_t i = 0; i < list.size(); ++i) {
    const std::string where = "observables[" + std::to_string(i) + "]";
    const json& o = list[i];
    if (!o.is_object() || !o.contains("kind")) {
      r.errors.push_back(where + ": expected an object with a kind");
      continue;
    }
    auto kind = r.string(o.at("kind"), where + ".kind");
    if (!kind) continue;
    Observable obs;
    if (*kind == "siegel_count") {
      r.keys(o, where, {"kind", "radius"});
      obs = Observable::siegel(1.5);
      if (o.contains("radius")) {
        if (auto v = r.number(o.at("radius"), where + ".radius")) obs.radius = *v;
      }
    } else if (*kind == "shortest_bump") {
      r.keys(o, where, {"kind", "center", "width"});
      obs = Observable::bump(1.0, 0.5);
      if (o.contains("center")) {
        if (auto v = r.number(o.at("center"), where + ".center")) obs.center = *v;
      }
      if (o.contains("width")) {
        if (auto v = r.number(o.at("width"), where + ".width")) obs.width = *v;
      }
    } else if (*kind == "shortest_log") {
      r.keys(o, where, {"kind"});
      obs = Observable::shortest_log();
    } else {
      r.errors.push_back(where + ": unknown observable kind '" + *kind + "'");
      continue;
    }
    c.observables.push_back(obs);
  }
}

void read_output(const json& root, ExperimentConfig& c, Reader& r) {
  const json* o = r.object(root, "output", "output");
  if (!o) return;
  r.keys(*o, "output", {"directory", "format"});
  if (o->contains("directory")) {
    if (auto v = r.string(o->at("directory"), "output.directory")) {
      c.output_directory = *v;
    }
  }
  if (o->contains("format")) {
    r.kind(o->at("format"), "output.format",
           [&](const std::string& s) { c.format = format_from_name(s); });
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("syntax: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"config root must be an object"});

  Reader r;
  r.keys(root, "config",
         {"dims", "diagonal", "unipotent", "walk", "observables", "output"});
  ExperimentConfig c = ExperimentConfig::defaults(read_dims(root, r));
  read_diagonal(root, c, r);
  read_unipotent(root, c, r);
  read_walk(root, c, r);
  read_observables(root, c, r);
  read_output(root, c, r);

  std::vector<std::string> errors = std::move(r.errors);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    errors.insert(errors.end(), e.errors().begin(), e.errors().end());
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path.string() + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json config_json(const ExperimentConfig& c) {
  json curve = {{"kind", CurveSpec::kind_name(c.curve_kind)}};
  if (c.curve_kind == CurveSpec::Kind::CustomPolynomial) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < c.curve_coefficients.rows(); ++i) {
      rows.push_back(vector_json(c.curve_coefficients.row(i).transpose()));
    }
    curve["coefficients"] = rows;
  }
  json aux = {{"kind", AuxiliaryLaw::kind_name(c.auxiliary.kind)}};
  if (c.auxiliary.kind == AuxiliaryLaw::Kind::UniformBall) {
    aux["radius"] = c.auxiliary.radius;
  } else if (c.auxiliary.kind == AuxiliaryLaw::Kind::PointMass) {
    aux["point"] = vector_json(c.auxiliary.point);
  }
  json obs = json::array();
  for (const auto& o : c.observables) {
    switch (o.kind) {
      case Observable::Kind::SiegelCount:
        obs.push_back({{"kind", "siegel_count"}, {"radius", o.radius}});
        break;
      case Observable::Kind::ShortestBump:
        obs.push_back(
            {{"kind", "shortest_bump"}, {"center", o.center}, {"width", o.width}});
        break;
      case Observable::Kind::ShortestLog:
        obs.push_back({{"kind", "shortest_log"}});
        break;
    }
  }
  return {
      {"dims", {{"k1", c.dims.k1}, {"k2", c.dims.k2}}},
      {"diagonal",
       {{"means", vector_json(c.means)},
        {"widths", vector_json(c.widths)},
        {"kind", DiagonalLawSpec::kind_name(c.diagonal_kind)}}},
      {"unipotent", {{"curve", curve}, {"mixture", c.mixture}, {"auxiliary", aux}}},
      {"walk",
       {{"steps", c.steps},
        {"trials", c.trials},
        {"seed", c.seed},
        {"record", c.record_schedule()}}},
      {"observables", obs},
      {"output",
       {{"directory", c.output_directory}, {"format", format_name(c.format)}}},
  };
}

}  // namespace

std::string canonical_config(const ExperimentConfig& cfg) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  return config_json(cfg).dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = config_json(cfg);
  j.erase("output");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------------ results

std::string record_kind_name(RecordKind k) {
  switch (k) {
    case RecordKind::Estimate: return "estimate";
    case RecordKind::Rate: return "rate";
    case RecordKind::Tail: return "tail";
    case RecordKind::Trace: return "trace";
    case RecordKind::Lyapunov: return "lyapunov";
    case RecordKind::Density: return "density";
  }
  return "?";
}

RecordKind record_kind_from_name(const std::string& name) {
  for (RecordKind k : {RecordKind::Estimate, RecordKind::Rate, RecordKind::Tail,
                       RecordKind::Trace, RecordKind::Lyapunov, RecordKind::Density}) {
    if (record_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown record kind '" + name + "'");
}

std::string csv_header(RecordKind k) {
  switch (k) {
    case RecordKind::Estimate: return "n,observable,mean,stderr,trials,aborted";
    case RecordKind::Rate: return "observable,eta_hat,c_hat,r2,eta_lo,eta_hi,n_min,n_max";
    case RecordKind::Tail: return "n,prob,lo,hi,trials";
    case RecordKind::Trace: return "trial,aborted_at,excursions,final_shortest,max_det_drift";
    case RecordKind::Lyapunov: return "trial,vector,exponent";
    case RecordKind::Density: return "cell,lo,hi,histogram,analytic,flagged";
  }
  return "";
}

namespace {

bool same_double(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

}  // namespace

bool operator==(const RateRecord& a, const RateRecord& b) {
  return a.observable == b.observable && same_double(a.eta_hat, b.eta_hat) &&
         same_double(a.c_hat, b.c_hat) && same_double(a.r2, b.r2) &&
         same_double(a.eta_lo, b.eta_lo) && same_double(a.eta_hi, b.eta_hi) &&
         a.n_min == b.n_min && a.n_max == b.n_max;
}

bool operator==(const LyapunovRecord& a, const LyapunovRecord& b) {
  return a.trial == b.trial && a.vector == b.vector &&
         same_double(a.exponent, b.exponent);
}

void ResultFile::sort() {
  std::stable_sort(estimates.begin(), estimates.end(), [](const auto& a, const auto& b) {
    return std::tie(a.n, a.observable) < std::tie(b.n, b.observable);
  });
  std::stable_sort(rates.begin(), rates.end(), [](const auto& a, const auto& b) {
    return a.observable < b.observable;
  });
  std::stable_sort(tails.begin(), tails.end(),
                   [](const auto& a, const auto& b) { return a.n < b.n; });
  std::stable_sort(traces.begin(), traces.end(),
                   [](const auto& a, const auto& b) { return a.trial < b.trial; });
  std::stable_sort(lyapunov.begin(), lyapunov.end(), [](const auto& a, const auto& b) {
    return std::tie(a.trial, a.vector) < std::tie(b.trial, b.vector);
  });
  std::stable_sort(density.begin(), density.end(),
                   [](const auto& a, const auto& b) { return a.cell < b.cell; });
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p += ".meta.json";
  return p;
}

namespace {

// Observable names contain commas; quote fields that need it.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s) {
  size_t pos = 0;
  const long long v = std::stoll(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad integer '" + s + "'");
  return v;
}

std::string csv_body(const ResultFile& r) {
  std::ostringstream os;
  os << csv_header(r.kind) << '\n';
  const auto d = format_double;
  switch (r.kind) {
    case RecordKind::Estimate:
      for (const auto& e : r.estimates) {
        os << e.n << ',' << csv_field(e.observable) << ',' << d(e.mean) << ','
           << d(e.stderr_mean) << ',' << e.trials << ',' << e.aborted << '\n';
      }
      break;
    case RecordKind::Rate:
      for (const auto& e : r.rates) {
        os << csv_field(e.observable) << ',' << d(e.eta_hat) << ',' << d(e.c_hat)
           << ',' << d(e.r2) << ',' << d(e.eta_lo) << ',' << d(e.eta_hi) << ','
           << e.n_min << ',' << e.n_max << '\n';
      }
      break;
    case RecordKind::Tail:
      for (const auto& e : r.tails) {
        os << e.n << ',' << d(e.prob) << ',' << d(e.lo) << ',' << d(e.hi) << ','
           << e.trials << '\n';
      }
      break;
    case RecordKind::Trace:
      for (const auto& e : r.traces) {
        os << e.trial << ',' << e.aborted_at << ',' << e.excursions << ','
           << d(e.final_shortest) << ',' << d(e.max_det_drift) << '\n';
      }
      break;
    case RecordKind::Lyapunov:
      for (const auto& e : r.lyapunov) {
        os << e.trial << ',' << e.vector << ',' << d(e.exponent) << '\n';
      }
      break;
    case RecordKind::Density:
      for (const auto& e : r.density) {
        os << e.cell << ',' << d(e.lo) << ',' << d(e.hi) << ',' << d(e.histogram)
           << ',' << d(e.analytic) << ',' << e.flagged << '\n';
      }
      break;
  }
  return os.str();
}

// Non-finite values become null; -inf survives as the string "-inf".
json num(double x) {
  if (std::isnan(x)) return nullptr;
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double from_num(const json& v) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (v.is_string()) return parse_double(v.get<std::string>());
  return v.get<double>();
}

json provenance_json(const ResultFile& r) {
  return {{"kind", record_kind_name(r.kind)},
          {"config_hash", r.provenance.config_hash},
          {"engine_version", r.provenance.engine_version},
          {"seed", r.provenance.seed}};
}

std::string json_body(const ResultFile& r) {
  json doc = provenance_json(r);
  json rows = json::array();
  for (const auto& e : r.estimates) {
    rows.push_back({{"n", e.n}, {"observable", e.observable}, {"mean", num(e.mean)},
                    {"stderr", num(e.stderr_mean)}, {"trials", e.trials},
                    {"aborted", e.aborted}});
  }
  for (const auto& e : r.rates) {
    rows.push_back({{"observable", e.observable}, {"eta_hat", num(e.eta_hat)},
                    {"c_hat", num(e.c_hat)}, {"r2", num(e.r2)},
                    {"eta_lo", num(e.eta_lo)}, {"eta_hi", num(e.eta_hi)},
                    {"n_min", e.n_min}, {"n_max", e.n_max}});
  }
  for (const auto& e : r.tails) {
    rows.push_back({{"n", e.n}, {"prob", num(e.prob)}, {"lo", num(e.lo)},
                    {"hi", num(e.hi)}, {"trials", e.trials}});
  }
  for (const auto& e : r.traces) {
    rows.push_back({{"trial", e.trial}, {"aborted_at", e.aborted_at},
                    {"excursions", e.excursions},
                    {"final_shortest", num(e.final_shortest)},
                    {"max_det_drift", num(e.max_det_drift)}});
  }
  for (const auto& e : r.lyapunov) {
    rows.push_back({{"trial", e.trial}, {"vector", e.vector},
                    {"exponent", num(e.exponent)}});
  }
  for (const auto& e : r.density) {
    rows.push_back({{"cell", e.cell}, {"lo", num(e.lo)}, {"hi", num(e.hi)},
                    {"histogram", num(e.histogram)}, {"analytic", num(e.analytic)},
                    {"flagged", e.flagged}});
  }
  doc["records"] = rows;
  return doc.dump(1) + "\n";
}

void atomic_write(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << body;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("write failed for '" + path.string() + "'");
    }
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing input file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void read_provenance(const json& j, ResultFile& r) {
  r.kind = record_kind_from_name(j.at("kind").get<std::string>());
  r.provenance.config_hash = j.at("config_hash").get<std::string>();
  r.provenance.engine_version = j.at("engine_version").get<std::string>();
  r.provenance.seed = j.at("seed").get<std::uint64_t>();
}

ResultFile load_csv(const fs::path& path) {
  ResultFile r;
  std::istringstream in(read_file(path));
  std::string header;
  std::getline(in, header);
  bool found = false;
  for (RecordKind k : {RecordKind::Estimate, RecordKind::Rate, RecordKind::Tail,
                       RecordKind::Trace, RecordKind::Lyapunov, RecordKind::Density}) {
    if (csv_header(k) == header) {
      r.kind = k;
      found = true;
    }
  }
  if (!found) throw std::runtime_error("unrecognized CSV header '" + header + "'");
  const fs::path meta = sidecar_path(path);
  if (fs::exists(meta)) {
    const json j = json::parse(read_file(meta));
    const RecordKind kind = r.kind;
    read_provenance(j, r);
    if (r.kind != kind) throw std::runtime_error("sidecar kind does not match header");
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const size_t want = split_csv_line(header).size();
    if (f.size() != want) throw std::runtime_error("wrong field count in '" + line + "'");
    switch (r.kind) {
      case RecordKind::Estimate:
        r.estimates.push_back({static_cast<int>(parse_int(f[0])), f[1],
                               parse_double(f[2]), parse_double(f[3]),
                               parse_int(f[4]), parse_int(f[5])});
        break;
      case RecordKind::Rate:
        r.rates.push_back({f[0], parse_double(f[1]), parse_double(f[2]),
                           parse_double(f[3]), parse_double(f[4]), parse_double(f[5]),
                           static_cast<int>(parse_int(f[6])),
                           static_cast<int>(parse_int(f[7]))});
        break;
      case RecordKind::Tail:
        r.tails.push_back({static_cast<int>(parse_int(f[0])), parse_double(f[1]),
                           parse_double(f[2]), parse_double(f[3]), parse_int(f[4])});
        break;
      case RecordKind::Trace:
        r.traces.push_back({static_cast<int>(parse_int(f[0])),
                            static_cast<int>(parse_int(f[1])), parse_int(f[2]),
                            parse_double(f[3]), parse_double(f[4])});
        break;
      case RecordKind::Lyapunov:
        r.lyapunov.push_back({static_cast<int>(parse_int(f[0])),
                              static_cast<int>(parse_int(f[1])), parse_double(f[2])});
        break;
      case RecordKind::Density:
        r.density.push_back({static_cast<int>(parse_int(f[0])), parse_double(f[1]),
                             parse_double(f[2]), parse_double(f[3]),
                             parse_double(f[4]), static_cast<int>(parse_int(f[5]))});
        break;
    }
  }
  return r;
}

ResultFile load_json(const fs::path& path) {
  ResultFile r;
  const json doc = json::parse(read_file(path));
  read_provenance(doc, r);
  for (const json& e : doc.at("records")) {
    switch (r.kind) {
      case RecordKind::Estimate:
        r.estimates.push_back({e.at("n").get<int>(), e.at("observable").get<std::string>(),
                               from_num(e.at("mean")), from_num(e.at("stderr")),
                               e.at("trials").get<std::int64_t>(),
                               e.at("aborted").get<std::int64_t>()});
        break;
      case RecordKind::Rate:
        r.rates.push_back({e.at("observable").get<std::string>(),
                           from_num(e.at("eta_hat")), from_num(e.at("c_hat")),
                           from_num(e.at("r2")), from_num(e.at("eta_lo")),
                           from_num(e.at("eta_hi")), e.at("n_min").get<int>(),
                           e.at("n_max").get<int>()});
        break;
      case RecordKind::Tail:
        r.tails.push_back({e.at("n").get<int>(), from_num(e.at("prob")),
                           from_num(e.at("lo")), from_num(e.at("hi")),
                           e.at("trials").get<std::int64_t>()});
        break;
      case RecordKind::Trace:
        r.traces.push_back({e.at("trial").get<int>(), e.at("aborted_at").get<int>(),
                            e.at("excursions").get<std::int64_t>(),
                            from_num(e.at("final_shortest")),
                            from_num(e.at("max_det_drift"))});
        break;
      case RecordKind::Lyapunov:
        r.lyapunov.push_back({e.at("trial").get<int>(), e.at("vector").get<int>(),
                              from_num(e.at("exponent"))});
        break;
      case RecordKind::Density:
        r.density.push_back({e.at("cell").get<int>(), from_num(e.at("lo")),
                             from_num(e.at("hi")), from_num(e.at("histogram")),
                             from_num(e.at("analytic")), e.at("flagged").get<int>()});
        break;
    }
  }
  return r;
}

}  // namespace

void emit_results(ResultFile results, Format format, const fs::path& path) {
  results.sort();
  if (format == Format::Csv) {
    atomic_write(sidecar_path(path), provenance_json(results).dump(1) + "\n");
    atomic_write(path, csv_body(results));
  } else {
    atomic_write(path, json_body(results));
  }
}

ResultFile load_results(const fs::path& path, Format format) {
  try {
    return format == Format::Csv ? load_csv(path) : load_json(path);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed result file '" + path.string() + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("malformed result file '" + path.string() + "': " + e.what());
  } catch (const std::out_of_range& e) {
    throw std::runtime_error("malformed result file '" + path.string() + "': " + e.what());
  }
}

// --------------------------------------------------------------- converters

std::vector<EstimateRecord> estimate_records(const WalkConfig& cfg,
                                             const EnsembleResult& result) {
  std::vector<EstimateRecord> rows;
  for (const auto& p : result.series(cfg)) {
    rows.push_back({p.n, cfg.observables[p.observable].name(), p.mean,
                    p.stderr_mean, p.trials, p.aborted});
  }
  return rows;
}

std::vector<TraceRecord> trace_records(const EnsembleResult& result) {
  std::vector<TraceRecord> rows;
  for (const auto& t : result.traces) {
    rows.push_back({t.trial, t.aborted_at.value_or(0),
                    static_cast<std::int64_t>(t.excursions.size()), t.final_shortest,
                    t.max_det_drift});
  }
  return rows;
}

std::vector<EstimateRecord> birkhoff_records(const WalkConfig& cfg,
                                             const BirkhoffResult& result) {
  std::vector<EstimateRecord> rows;
  const std::int64_t aborted = result.aborted_at ? 1 : 0;
  for (size_t g = 0; g < result.grid.size(); ++g) {
    for (size_t o = 0; o < result.averages[g].size(); ++o) {
      const std::string name =
          o < cfg.observables.size() ? cfg.observables[o].name() : "f" + std::to_string(o);
      rows.push_back({result.grid[g], name, result.averages[g][o],
                      result.stderrs[g][o], 1, aborted});
    }
  }
  return rows;
}

std::string serialize_lattice(const LatticePoint& p) {
  std::string s;
  const Matrix& b = p.basis();
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      if (!s.empty()) s += ' ';
      s += format_double(b(i, j));
    }
  }
  return s;
}

LatticePoint deserialize_lattice(Dims dims, const std::string& text) {
  const int k0 = dims.k0();
  std::istringstream in(text);
  std::vector<double> v;
  std::string tok;
  while (in >> tok) v.push_back(parse_double(tok));
  if (static_cast<int>(v.size()) != k0 * k0) {
    throw DimensionError("deserialize_lattice: expected " + std::to_string(k0 * k0) +
                         " entries, got " + std::to_string(v.size()));
  }
  Matrix b(k0, k0);
  for (int i = 0; i < k0; ++i) {
    for (int j = 0; j < k0; ++j) b(i, j) = v[static_cast<size_t>(i * k0 + j)];
  }
  return LatticePoint(dims, b);
}

}  // namespace horowalk
