#include "doctest.h"

#include "horowalk/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

using namespace horowalk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("horowalk_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions(const ConfigError& e, const std::string& needle) {
  for (const auto& s : e.errors()) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

ConfigError config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError({});
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

ResultFile sample(RecordKind kind) {
  ResultFile r;
  r.kind = kind;
  r.provenance = {"0123456789abcdef", kEngineVersion, 42};
  switch (kind) {
    case RecordKind::Estimate:
      r.estimates = {{2, "siegel_count(R=1.5)", 7.0686834705770345, 0.1, 100, 0},
                     {1, "shortest_log", -0.1 / 3.0, 1e-300, 100, 3},
                     {1, Observable::bump(1.0, 0.5).name(), 0.5, 0.01, 100, 0}};
      break;
    case RecordKind::Rate:
      r.rates = {{"siegel_count(R=1.5)", 0.2, 3.0, 0.99, 0.18, 0.22, 2, 20},
                 {"shortest_log", kNan, kNan, kNan, kNan, kNan, 4, 6}};
      break;
    case RecordKind::Tail:
      r.tails = {{10, 0.25, 0.2, 0.3, 100000}, {20, 0.0, 0.0, 3.8e-5, 100000}};
      break;
    case RecordKind::Trace:
      r.traces = {{0, 0, 2, 0.8, 1e-15}, {1, 17, 0, 0.0, 0.0}};
      break;
    case RecordKind::Lyapunov:
      r.lyapunov = {{0, 0, 1.0}, {0, 1, -kInf}, {1, 0, 0.123456789012345678}};
      break;
    case RecordKind::Density:
      r.density = {{0, 0.0, 0.005, 0.07, 0.0707, 0}, {1, 0.005, 0.01, 0.03, 0.0, 1}};
      break;
  }
  return r;
}

}  // namespace

TEST_CASE("minimal config gets defaults") {
  const ExperimentConfig c = parse_config_text(R"({"dims": {"k1": 1, "k2": 1}})");
  CHECK(c.dims == Dims(1, 1));
  CHECK(c.means[0] == doctest::Approx(0.5));
  CHECK(c.means[1] == doctest::Approx(-0.5));
  CHECK(c.widths[0] == doctest::Approx(0.2));
  CHECK(c.steps == 40);
  CHECK(c.trials == 1000);
  CHECK(c.observables.size() == 1);
  CHECK(c.observables[0] == Observable::siegel(1.5));
  CHECK(c.record_schedule().size() == 40);
  const std::string canon = canonical_config(c);
  CHECK(canon.find("\"means\"") != std::string::npos);
  CHECK(parse_config_text("{}").dims == Dims(1, 1));

  const ExperimentConfig d3 = ExperimentConfig::defaults(Dims(2, 1));
  CHECK(d3.means.sum() == doctest::Approx(0.0));
  CHECK(d3.diagonal().expanding());
}

TEST_CASE("config file with comments") {
  const ExperimentConfig c = parse_config(HOROWALK_TEST_DATA "/good.json");
  CHECK(c.seed == 1);
  CHECK(c.format == Format::Csv);
  CHECK_THROWS_AS(parse_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("zero-sum violation is named") {
  const ConfigError e = config_error(R"({"diagonal": {"means": [0.5, 0.6]}})");
  CHECK(mentions(e, "zero-sum"));
}

TEST_CASE("expansion violation names the pair") {
  const ConfigError e = config_error(R"({"diagonal": {"means": [-0.5, 0.5]}})");
  CHECK(mentions(e, "(i,j) = (1,2)"));
}

TEST_CASE("all errors are collected") {
  const ConfigError e = config_error(
      R"({"bogus": 1, "walk": {"steps": 0, "trials": -1}, "observables": [{"kind": "nope"}],
          "unipotent": {"mixture": 1.5}})");
  CHECK(mentions(e, "bogus"));
  CHECK(mentions(e, "walk.steps"));
  CHECK(mentions(e, "walk.trials"));
  CHECK(mentions(e, "nope"));
  CHECK(mentions(e, "mixture"));
  CHECK(e.errors().size() >= 5);
  CHECK(mentions(config_error("{not json"), "syntax"));
  CHECK(mentions(config_error(R"({"walk": {"steps": 5, "record": [6]}})"), "record"));
  CHECK(mentions(config_error(R"({"dims": {"k1": 0}})"), "dims"));
  CHECK(mentions(config_error(R"({"unipotent": {"curve": {"kind": "custom_polynomial"}}})"),
                 "coefficients"));
}

TEST_CASE("custom curve and mixture parse") {
  const ExperimentConfig c = parse_config_text(R"({
    "unipotent": {"curve": {"kind": "custom_polynomial", "coefficients": [[0, 2, 1]]},
                  "mixture": 0.25, "auxiliary": {"kind": "uniform_ball", "radius": 0.5}}})");
  CHECK(c.curve().value(1.0)[0] == doctest::Approx(3.0));
  CHECK(c.unipotent().mixture() == 0.25);
  CHECK(c.auxiliary.radius == 0.5);
}

TEST_CASE("hash is stable under key order and whitespace") {
  const ExperimentConfig a = parse_config_text(
      R"({"walk": {"seed": 3, "steps": 10}, "dims": {"k2": 1, "k1": 1}})");
  const ExperimentConfig b = parse_config_text(
      R"({ "dims":{"k1":1,"k2":1},
           // same thing
           "walk":{"steps":10,"seed":3} })");
  CHECK(canonical_config(a) == canonical_config(b));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  const ExperimentConfig c = parse_config_text(R"({"walk": {"seed": 4, "steps": 10}})");
  CHECK(config_hash(a) != config_hash(c));
  const ExperimentConfig moved = parse_config_text(
      R"({"walk": {"seed": 3, "steps": 10}, "output": {"directory": "elsewhere", "format": "json"}})");
  CHECK(config_hash(moved) == config_hash(a));
  CHECK(canonical_config(moved) != canonical_config(a));
  // Canonical text reparses to the same config.
  CHECK(config_hash(parse_config_text(canonical_config(a))) == config_hash(a));
  // Default record schedule and its explicit spelling agree.
  std::string all = R"({"walk": {"seed": 3, "steps": 10, "record": [1,2,3,4,5,6,7,8,9,10]}})";
  CHECK(config_hash(parse_config_text(all)) == config_hash(a));
}

TEST_CASE("set_steps drops late record entries") {
  ExperimentConfig c = parse_config_text(R"({"walk": {"steps": 40, "record": [10, 20, 40]}})");
  c.set_steps(20);
  CHECK(c.record == std::vector<int>{10, 20});
}

TEST_CASE("format names") {
  CHECK(format_from_name("csv") == Format::Csv);
  CHECK(format_from_name("json") == Format::Json);
  CHECK(format_name(Format::Json) == "json");
  CHECK_THROWS_AS(format_from_name("xml"), std::invalid_argument);
  for (RecordKind k : {RecordKind::Estimate, RecordKind::Rate, RecordKind::Tail,
                       RecordKind::Trace, RecordKind::Lyapunov, RecordKind::Density}) {
    CHECK(record_kind_from_name(record_kind_name(k)) == k);
  }
  CHECK(csv_header(RecordKind::Estimate) == "n,observable,mean,stderr,trials,aborted");
  CHECK(csv_header(RecordKind::Tail) == "n,prob,lo,hi,trials");
}

TEST_CASE("format_double") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(kNan) == "nan");
  CHECK(format_double(kInf) == "inf");
  CHECK(format_double(-kInf) == "-inf");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("round trip of every record kind") {
  TempDir dir;
  for (RecordKind k : {RecordKind::Estimate, RecordKind::Rate, RecordKind::Tail,
                       RecordKind::Trace, RecordKind::Lyapunov, RecordKind::Density}) {
    for (Format f : {Format::Csv, Format::Json}) {
      CAPTURE(record_kind_name(k));
      CAPTURE(format_name(f));
      const fs::path p = dir.path / (record_kind_name(k) + "." + format_name(f));
      ResultFile r = sample(k);
      emit_results(r, f, p);
      r.sort();
      CHECK(load_results(p, f) == r);
      if (f == Format::Csv) CHECK(fs::exists(sidecar_path(p)));
    }
  }
}

TEST_CASE("empty result file is header only") {
  TempDir dir;
  ResultFile r;
  r.kind = RecordKind::Estimate;
  r.provenance.config_hash = "00";
  const fs::path p = dir.path / "empty.csv";
  emit_results(r, Format::Csv, p);
  CHECK(slurp(p) == csv_header(RecordKind::Estimate) + "\n");
  CHECK(load_results(p, Format::Csv) == r);
}

TEST_CASE("one estimate is two stable lines") {
  TempDir dir;
  ResultFile r;
  r.kind = RecordKind::Estimate;
  r.estimates = {{40, "siegel_count(R=1.5)", 7.0, 0.05, 20000, 0}};
  const fs::path p = dir.path / "one.csv";
  emit_results(r, Format::Csv, p);
  const std::string first = slurp(p);
  CHECK(first == "n,observable,mean,stderr,trials,aborted\n"
                 "40,siegel_count(R=1.5),7,0.050000000000000003,20000,0\n");
  emit_results(r, Format::Csv, p);
  CHECK(slurp(p) == first);
  // No temporaries left behind.
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++files;
  CHECK(files == 2);
}

TEST_CASE("malformed or missing result files") {
  TempDir dir;
  CHECK_THROWS_AS(load_results(dir.path / "absent.csv", Format::Csv), std::runtime_error);
  const fs::path p = dir.path / "bad.csv";
  ResultFile r = sample(RecordKind::Tail);
  emit_results(r, Format::Csv, p);
  {
    std::ofstream out(p);
    out << "n,prob\n1,2\n";
  }
  CHECK_THROWS_AS(load_results(p, Format::Csv), std::runtime_error);
  const fs::path j = dir.path / "bad.json";
  {
    std::ofstream out(j);
    out << "{\"kind\": \"tail\"";
  }
  CHECK_THROWS_AS(load_results(j, Format::Json), std::runtime_error);
}

TEST_CASE("lattice serialization") {
  Matrix b(2, 2);
  b << 2.0, 1.0 / 3.0, 0.0, 0.5;
  const LatticePoint p(Dims(1, 1), b);
  const std::string s = serialize_lattice(p);
  const LatticePoint q = deserialize_lattice(Dims(1, 1), s);
  CHECK(q.basis() == p.basis());
  CHECK_THROWS(deserialize_lattice(Dims(1, 1), "1 2 3"));
}

TEST_CASE("converters") {
  ExperimentConfig c = parse_config_text(R"({"walk": {"steps": 3, "trials": 4, "seed": 2}})");
  const WalkConfig w = c.walk(1);
  const EnsembleResult e = run_ensemble(w);
  const auto est = estimate_records(w, e);
  REQUIRE(est.size() == 3);
  CHECK(est[2].n == 3);
  CHECK(est[2].observable == "siegel_count(R=1.5)");
  CHECK(est[2].trials == 4);
  CHECK(est[2].mean == e.moments[2][0].mean());
  const auto tr = trace_records(e);
  REQUIRE(tr.size() == 4);
  CHECK(tr[1].trial == 1);
  CHECK(tr[1].final_shortest == e.traces[1].final_shortest);
  const BirkhoffResult b = run_birkhoff(w, 10);
  const auto br = birkhoff_records(w, b);
  CHECK(br.size() == b.grid.size());
  CHECK(br.back().n == 10);
}
