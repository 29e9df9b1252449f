#include "horowalk/cli.hpp"

#include "horowalk/io.hpp"
#include "horowalk/stats.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

namespace horowalk {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> steps;
  std::string out;
  std::string format;
  int threads = 0;
};

struct Context {
  ExperimentConfig cfg;
  fs::path out_dir;
  Format format = Format::Csv;
  int threads = 0;

  fs::path file(const std::string& stem) const {
    return out_dir / (stem + "." + format_name(format));
  }

  ResultFile start(RecordKind kind) const {
    ResultFile f;
    f.kind = kind;
    f.provenance = {config_hash(cfg), kEngineVersion, cfg.seed};
    return f;
  }
};

Context load_context(const Globals& g) {
  Context c;
  c.cfg = g.config.empty() ? ExperimentConfig::defaults(Dims(1, 1))
                           : parse_config(g.config);
  if (g.seed) c.cfg.seed = *g.seed;
  if (g.trials) c.cfg.trials = *g.trials;
  if (g.steps) c.cfg.set_steps(*g.steps);
  if (!g.format.empty()) c.cfg.format = format_from_name(g.format);
  if (!g.out.empty()) c.cfg.output_directory = g.out;
  c.cfg.validate();
  c.out_dir = c.cfg.output_directory;
  c.format = c.cfg.format;
  c.threads = g.threads;
  return c;
}

std::vector<int> parse_ns(const std::string& text) {
  std::vector<int> ns;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    size_t pos = 0;
    const int n = std::stoi(tok, &pos);
    if (pos != tok.size() || n < 1) {
      throw std::invalid_argument("--ns: bad entry '" + tok + "'");
    }
    ns.push_back(n);
  }
  if (ns.empty()) throw std::invalid_argument("--ns: empty list");
  return ns;
}

std::vector<TailRecord> tail_records(const TailCurve& c) {
  std::vector<TailRecord> rows;
  for (const auto& p : c.points) rows.push_back({p.n, p.prob, p.lo, p.hi, p.trials});
  return rows;
}

void print_tail_fit(std::ostream& out, const std::string& label, const TailCurve& c) {
  out << label << " fitted=" << (c.fitted ? 1 : 0);
  if (c.fitted) {
    out << " slope=" << format_double(c.slope) << " slope_lo=" << format_double(c.slope_lo)
        << " slope_hi=" << format_double(c.slope_hi);
  }
  out << '\n';
}

int cmd_walk(const Context& c, std::ostream& out) {
  const WalkConfig wc = c.cfg.walk(c.threads);
  const EnsembleResult r = run_ensemble(wc);
  ResultFile est = c.start(RecordKind::Estimate);
  est.estimates = estimate_records(wc, r);
  emit_results(est, c.format, c.file("estimates"));
  ResultFile tr = c.start(RecordKind::Trace);
  tr.traces = trace_records(r);
  emit_results(tr, c.format, c.file("trials"));
  out << "trials=" << wc.trials << " steps=" << wc.steps
      << " excursions=" << r.excursions << '\n';
  return kExitOk;
}

int cmd_birkhoff(const Context& c, int length, std::ostream& out) {
  const WalkConfig wc = c.cfg.walk(c.threads);
  const BirkhoffResult r = run_birkhoff(wc, length);
  ResultFile f = c.start(RecordKind::Estimate);
  f.estimates = birkhoff_records(wc, r);
  emit_results(f, c.format, c.file("birkhoff"));
  if (!r.grid.empty()) {
    for (size_t o = 0; o < wc.observables.size(); ++o) {
      out << wc.observables[o].name() << " n=" << r.grid.back()
          << " average=" << format_double(r.averages.back()[o])
          << " stderr=" << format_double(r.stderrs.back()[o]) << '\n';
    }
  }
  if (r.aborted_at) out << "aborted_at=" << *r.aborted_at << '\n';
  return kExitOk;
}

int cmd_rate(const Context& c, const std::string& input, std::ostream& out,
             std::ostream& err) {
  const fs::path in = input.empty() ? c.file("estimates") : fs::path(input);
  const Format in_format = in.extension() == ".json" ? Format::Json : Format::Csv;
  if (!fs::exists(in)) {
    throw std::runtime_error("missing input file '" + in.string() +
                             "' (run `walk` first or pass --input)");
  }
  const ResultFile est = load_results(in, in_format);
  if (est.kind != RecordKind::Estimate) {
    throw std::runtime_error("'" + in.string() + "' does not hold estimates");
  }
  std::map<std::string, std::vector<SeriesPoint>> series;
  for (const auto& e : est.estimates) {
    series[e.observable].push_back({e.n, e.mean, e.stderr_mean});
  }
  ResultFile rates = c.start(RecordKind::Rate);
  const double nan = std::nan("");
  for (const auto& [name, pts] : series) {
    std::optional<double> haar;
    for (const auto& o : c.cfg.observables) {
      if (o.name() == name) haar = haar_mean(o, c.cfg.dims);
    }
    if (!haar) {
      err << "rate: no Haar mean for '" << name << "', skipped\n";
      continue;
    }
    const RateFit f = estimate_rate(pts, *haar);
    if (f.fitted) {
      rates.rates.push_back(
          {name, f.eta_hat, f.c_hat, f.r2, f.eta_lo, f.eta_hi, f.n_min, f.n_max});
    } else {
      const int first = pts.empty() ? 0 : f.points.front().first;
      rates.rates.push_back({name, nan, nan, nan, nan, nan, first,
                             f.floor_n.value_or(pts.empty() ? 0 : f.points.back().first)});
    }
    out << name << " fitted=" << (f.fitted ? 1 : 0);
    if (f.fitted) {
      out << " eta_hat=" << format_double(f.eta_hat) << " r2=" << format_double(f.r2);
    }
    if (f.floor_n) out << " floor_n=" << *f.floor_n;
    out << '\n';
  }
  emit_results(rates, c.format, c.file("rates"));
  return kExitOk;
}

struct TailArgs {
  std::string kind = "chernoff";
  std::string ns = "10,20,40,80";
  double eps = 0.05;
  int coordinate = 1;
  double c_probe = 0.0;
};

int cmd_tails(const Context& c, const TailArgs& a, std::ostream& out) {
  const std::vector<int> ns = parse_ns(a.ns);
  const DiagonalLawSpec law = c.cfg.diagonal();
  const TailOptions opt{c.cfg.trials, c.cfg.seed, c.threads};
  ResultFile f = c.start(RecordKind::Tail);
  if (a.kind == "chernoff") {
    if (a.coordinate < 1 || a.coordinate > c.cfg.dims.k0()) {
      throw std::invalid_argument("--coordinate must lie in 1..k0");
    }
    const TailCurve curve = chernoff_tail(law, a.coordinate - 1, a.eps, ns, opt);
    f.tails = tail_records(curve);
    print_tail_fit(out, "chernoff", curve);
    for (int n : ns) {
      out << "n=" << n << " bound="
          << format_double(chernoff_bound(law, a.coordinate - 1, a.eps, n)) << '\n';
    }
  } else if (a.kind == "expansion") {
    const TailCurve curve = expansion_set_mass(law, ns, opt);
    f.tails = tail_records(curve);
    print_tail_fit(out, "expansion", curve);
  } else if (a.kind == "growth") {
    const double probe = a.c_probe > 0.0 ? a.c_probe : std::exp(law.beta_min());
    const GrowthCurve g = conjugation_growth(law, c.cfg.unipotent(), ns, probe, opt);
    f.tails = tail_records(g.failure);
    print_tail_fit(out, "growth_failure", g.failure);
    out << "c_probe=" << format_double(probe) << " zero_resamples=" << g.zero_resamples
        << '\n';
  } else {
    throw std::invalid_argument("--kind must be chernoff, expansion or growth");
  }
  emit_results(f, c.format, c.file("tails_" + a.kind));
  return kExitOk;
}

int cmd_lyapunov(const Context& c, int vectors, std::ostream& out) {
  if (vectors < 1) throw std::invalid_argument("--vectors must be >= 1");
  const WalkConfig wc = c.cfg.walk(c.threads);
  Stream rng(c.cfg.seed, 0xfffffffeULL, 0);
  std::vector<LieAlgebraElement> vs;
  for (int i = 0; i < vectors; ++i) vs.push_back(random_traceless(c.cfg.dims, rng));
  const LyapunovReport r = lyapunov_check(wc, vs, wc.steps);
  ResultFile f = c.start(RecordKind::Lyapunov);
  for (size_t t = 0; t < r.exponents.size(); ++t) {
    for (size_t v = 0; v < r.exponents[t].size(); ++v) {
      f.lyapunov.push_back({static_cast<int>(t), static_cast<int>(v), r.exponents[t][v]});
    }
  }
  emit_results(f, c.format, c.file("lyapunov"));
  out << "steps=" << r.steps << " nonpositive=" << r.nonpositive
      << " underflows=" << r.underflows << '\n';
  return kExitOk;
}

int cmd_nonplanar(const Context& c, std::int64_t samples, double tol, std::ostream& out) {
  const NonplanarityReport r = nonplanarity_check(c.cfg.curve(), samples, tol, c.cfg.seed);
  out << "curve=" << CurveSpec::kind_name(c.cfg.curve_kind) << " samples=" << r.samples
      << " zero_fraction=" << format_double(r.zero_fraction)
      << " min_abs_det=" << format_double(r.min_abs_det)
      << " q01=" << format_double(r.q01) << " q10=" << format_double(r.q10)
      << " q50=" << format_double(r.q50) << '\n';
  return kExitOk;
}

int cmd_density(const Context& c, std::int64_t samples, const DensityGrid& grid,
                std::ostream& out) {
  const int k = c.cfg.dims.k();
  std::vector<Vector> scalings(static_cast<size_t>(k), Vector::Ones(k));
  const DensityDiagnostic d =
      pushforward_density_check(scalings, c.cfg.curve(), grid, samples, c.cfg.seed);
  ResultFile f = c.start(RecordKind::Density);
  const double h = (grid.hi - grid.lo) / grid.cells;
  for (size_t i = 0; i < d.histogram.size(); ++i) {
    const int cell = static_cast<int>(i);
    const int col = cell % grid.cells;
    f.density.push_back({cell, grid.lo + col * h, grid.lo + (col + 1) * h,
                         d.histogram[i], d.analytic[i], d.flagged[i] ? 1 : 0});
  }
  emit_results(f, c.format, c.file("density"));
  out << "total_variation=" << format_double(d.total_variation)
      << " escaped_mass=" << format_double(d.escaped_mass)
      << " flagged_mass=" << format_double(d.flagged_mass)
      << " analytic_mass=" << format_double(d.analytic_mass) << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random walks on spaces of unimodular lattices", "horowalk"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Base seed, overrides the config");
  app.add_option("--trials", g.trials, "Trial count")->check(CLI::PositiveNumber);
  app.add_option("--steps", g.steps, "Walk length")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--format", g.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);

  auto* walk = app.add_subcommand("walk", "Run an ensemble and write estimates");
  auto* birk = app.add_subcommand("birkhoff", "Running averages along one trajectory");
  int length = 100000;
  birk->add_option("--length", length, "Trajectory length")->check(CLI::PositiveNumber);
  auto* rate = app.add_subcommand("rate", "Fit the convergence rate from estimates");
  std::string input;
  rate->add_option("--input", input, "Estimates file (default <out>/estimates.<format>)");
  auto* tails = app.add_subcommand("tails", "Chernoff, expansion-set and growth tails");
  TailArgs ta;
  tails->add_option("--kind", ta.kind, "chernoff | expansion | growth")
      ->check(CLI::IsMember({"chernoff", "expansion", "growth"}));
  tails->add_option("--ns", ta.ns, "Comma-separated step counts");
  tails->add_option("--eps", ta.eps, "Deviation for chernoff");
  tails->add_option("--coordinate", ta.coordinate, "Diagonal coordinate (1-based)");
  tails->add_option("--c-probe", ta.c_probe, "Growth threshold base (default e^beta)");
  auto* lyap = app.add_subcommand("lyapunov", "Adjoint growth exponents");
  int vectors = 20;
  lyap->add_option("--vectors", vectors, "Random traceless directions");
  auto* nonp = app.add_subcommand("nonplanar", "Non-planarity check of the curve");
  std::int64_t np_samples = 1000000;
  double tol = 1e-12;
  nonp->add_option("--samples", np_samples)->check(CLI::PositiveNumber);
  nonp->add_option("--tol", tol);
  auto* dens = app.add_subcommand("density", "Pushforward density reconstruction");
  std::int64_t d_samples = 1000000;
  DensityGrid grid;
  grid.cells = 200;
  dens->add_option("--samples", d_samples)->check(CLI::PositiveNumber);
  dens->add_option("--cells", grid.cells)->check(CLI::PositiveNumber);
  dens->add_option("--lo", grid.lo);
  dens->add_option("--hi", grid.hi);
  auto* validate = app.add_subcommand("validate", "Parse the config and print it");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "horowalk: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    const Context c = load_context(g);
    if (walk->parsed()) return cmd_walk(c, out);
    if (birk->parsed()) return cmd_birkhoff(c, length, out);
    if (rate->parsed()) return cmd_rate(c, input, out, err);
    if (tails->parsed()) return cmd_tails(c, ta, out);
    if (lyap->parsed()) return cmd_lyapunov(c, vectors, out);
    if (nonp->parsed()) return cmd_nonplanar(c, np_samples, tol, out);
    if (dens->parsed()) return cmd_density(c, d_samples, grid, out);
    if (validate->parsed()) {
      out << canonical_config(c.cfg) << "\nhash " << config_hash(c.cfg) << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "horowalk: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::logic_error& e) {
    err << "horowalk: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "horowalk: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace horowalk
