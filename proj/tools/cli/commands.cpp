#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli/config.hpp"
#include "pvcal/csv.hpp"
#include "pvcal/error.hpp"
#include "pvcal/harness.hpp"
#include "pvcal/models.hpp"
#include "pvcal/rstar.hpp"
#include "pvcal/saddlepoint.hpp"
#include "pvcal/specialfn.hpp"

namespace pvcal::cli {

using nlohmann::json;

namespace {

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error(ErrorKind::io, "cannot write " + path);
      out_ = &file_;
    }
  }
  std::ostream& operator*() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += ',';
    s += parts[i];
  }
  return s;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

TestStatCalibration predict_calibration(const ConfigFile& cfg, Sidedness& sided) {
  if (cfg.family && cfg.calibration) {
    const auto& c = *cfg.calibration;
    sided = c.sided;
    const double a = c.a_n.value_or(cfg.family->mean());
    const double b = c.b_n.value_or(std::sqrt(cfg.family->variance()));
    return calibrate(*cfg.family, c.n, a, b);
  }
  if (cfg.experiment) {
    const auto& e = *cfg.experiment;
    if (e.scenario != Scenario::gamma_clt && e.scenario != Scenario::linkage) {
      throw Error(ErrorKind::config, "config: predict needs a gamma_clt or linkage experiment, or family + calibration");
    }
    sided = e.sided;
    return scenario_calibration(e, e.theory == TheoryKind::correct_variance ? TheoryKind::correct_variance
                                                                           : TheoryKind::edgeworth);
  }
  throw Error(ErrorKind::config, "config: predict needs family + calibration blocks or an experiment block");
}

json summary_json(const ExperimentResult& r) {
  const auto& c = r.config;
  json j;
  j["scenario"] = to_string(c.scenario);
  j["n"] = c.n;
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["sided"] = to_string(c.sided);
  j["theory"] = r.theory_name;
  j["wall_seconds"] = r.wall_seconds;
  switch (c.scenario) {
    case Scenario::gamma_clt:
      j["parameters"] = {{"shape", c.gamma.shape}, {"null_rate", c.gamma.null_rate}, {"true_rate", c.gamma.true_rate}};
      break;
    case Scenario::linkage: j["parameters"] = {{"truth", c.linkage.truth}}; break;
    case Scenario::logistic_gwas:
      j["parameters"] = {{"maf", c.gwas.maf}, {"beta", c.gwas.beta}, {"fixed_labels", c.gwas.fixed_labels}};
      break;
    case Scenario::weibull_many_nuisance:
      j["parameters"] = {{"k", c.weibull.k}, {"shape", c.weibull.shape}, {"scale", c.weibull.scale}};
      break;
  }
  json methods = json::object();
  for (const auto& m : r.methods) {
    json mj;
    mj["excluded"] = m.excluded;
    mj["error_counts"] = m.error_counts;
    json t1 = json::array();
    for (const auto& t : m.type1) t1.push_back({{"alpha", t.alpha}, {"rate", t.rate}, {"se", t.se}});
    mj["type1_error"] = t1;
    mj["ks_theory"] = number_or_null(m.ks_theory);
    mj["ks_uniform"] = number_or_null(m.ks_uniform);
    if (m.shape) {
      mj["shape"] = {{"label", to_string(m.shape->shape)},
                     {"low_density", m.shape->low_density},
                     {"high_density", m.shape->high_density},
                     {"mode_density", m.shape->mode_density},
                     {"mode_bin", m.shape->mode_bin},
                     {"low_end_deficient", m.shape->low_end_deficient}};
    } else {
      mj["shape"] = nullptr;
    }
    methods[to_string(m.method)] = mj;
  }
  j["methods"] = methods;
  return j;
}

void write_hist(std::ostream& os, const ExperimentResult& r, const std::string& run_label, bool header) {
  if (header) {
    std::vector<std::string> cols;
    if (!run_label.empty()) cols.push_back("run");
    cols.insert(cols.end(), {"bin_lo", "bin_hi"});
    for (const auto& m : r.methods) cols.push_back(std::string("count_") + to_string(m.method));
    os << join(cols) << '\n';
  }
  for (int b = 0; b < kHistogramBins; ++b) {
    std::vector<std::string> row;
    if (!run_label.empty()) row.push_back(run_label);
    row.push_back(format_number(r.histogram_edges[static_cast<std::size_t>(b)]));
    row.push_back(format_number(r.histogram_edges[static_cast<std::size_t>(b) + 1]));
    for (const auto& m : r.methods) row.push_back(std::to_string(m.histogram[static_cast<std::size_t>(b)]));
    os << join(row) << '\n';
  }
}

void write_ecdf(std::ostream& os, const ExperimentResult& r, const std::string& run_label, bool header) {
  if (header) {
    std::vector<std::string> cols;
    if (!run_label.empty()) cols.push_back("run");
    cols.push_back("t");
    for (const auto& m : r.methods) cols.push_back(std::string("ecdf_") + to_string(m.method));
    cols.push_back("theory");
    os << join(cols) << '\n';
  }
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    std::vector<std::string> row;
    if (!run_label.empty()) row.push_back(run_label);
    row.push_back(format_number(r.grid[i]));
    for (const auto& m : r.methods) row.push_back(format_number(m.ecdf[i]));
    row.push_back(format_number(r.theory_cdf[i]));
    os << join(row) << '\n';
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path);
  return f;
}

// ECDF value at x by linear interpolation, with F(0) = 0 and F(1) = 1.
double interpolate_cdf(const std::vector<double>& t, const std::vector<double>& f, double x) {
  std::vector<double> tt{0.0}, ff{0.0};
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] > 0.0 && t[i] < 1.0) {
      tt.push_back(t[i]);
      ff.push_back(f[i]);
    }
  }
  tt.push_back(1.0);
  ff.push_back(1.0);
  const auto it = std::upper_bound(tt.begin(), tt.end(), x);
  if (it == tt.end()) return 1.0;
  const auto k = static_cast<std::size_t>(it - tt.begin());
  const double w = (x - tt[k - 1]) / (tt[k] - tt[k - 1]);
  return ff[k - 1] + w * (ff[k] - ff[k - 1]);
}

std::vector<double> numeric_column(const CsvTable& table, const std::string& name, const std::string& file) {
  const auto col = table.column(name);
  if (!col) throw Error(ErrorKind::config, file + ": no column named '" + name + "'");
  std::vector<double> out;
  for (const auto& row : table.rows) {
    const auto v = parse_number(row[*col]);
    out.push_back(v ? *v : std::nan(""));
  }
  return out;
}

}  // namespace

std::vector<double> parse_grid(const std::string& spec) {
  double lo = 0.0, hi = 0.0, step = 0.0;
  char c1 = 0, c2 = 0;
  std::istringstream ss(spec);
  if (!(ss >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(ss >> std::ws).eof()) {
    throw Error(ErrorKind::config, "grid: expected lo:hi:step, got '" + spec + "'");
  }
  if (!(lo > 0.0 && hi < 1.0 && lo <= hi && step > 0.0)) {
    throw Error(ErrorKind::config, "grid: need 0 < lo <= hi < 1 and step > 0");
  }
  const long count = std::lround((hi - lo) / step) + 1;
  if (count > 10000000) throw Error(ErrorKind::config, "grid: too many points");
  std::vector<double> g;
  for (long i = 0; i < count; ++i) g.push_back(std::min(hi, lo + static_cast<double>(i) * step));
  return g;
}

void cmd_predict(const GlobalOptions& g, const PredictOptions& o, std::ostream& out) {
  const ConfigFile cfg = load_config(o.config);
  Sidedness sided = Sidedness::two_sided;
  const TestStatCalibration cal = predict_calibration(cfg, sided);
  const auto grid = parse_grid(o.grid.empty() ? "0.0005:0.9995:0.001" : o.grid);
  const PValueCurve curve = pvalue_curve(cal, grid, sided);

  Output os(g.out, out);
  *os << "t,cdf,pdf,flag_out_of_range\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double cdf = curve.cdf[i];
    if (o.clamp) cdf = std::clamp(cdf, 0.0, 1.0);
    *os << format_number(grid[i]) << ',' << format_number(cdf) << ','
        << (curve.has_pdf() ? format_number(curve.pdf[i]) : std::string()) << ','
        << (curve.out_of_range[i] ? 1 : 0) << '\n';
  }
}

void cmd_simulate(const GlobalOptions& g, const SimulateOptions& o, std::ostream& out) {
  const ConfigFile cfg = load_config(o.config);
  if (!cfg.experiment) throw Error(ErrorKind::config, "config: simulate needs an experiment block");
  ExperimentConfig base = *cfg.experiment;
  if (g.seed) base.seed = *g.seed;
  if (g.threads) {
    if (*g.threads < 1) throw Error(ErrorKind::config, "--threads must be >= 1");
    base.workers = *g.threads;
  }
  if (o.reps) base.reps = *o.reps;
  base.validate();

  std::string prefix = g.out;
  if (prefix.empty()) prefix = std::filesystem::path(o.config).stem().string();

  std::vector<std::pair<std::string, ExperimentConfig>> runs;
  if (cfg.sweep) {
    for (std::size_t i = 0; i < cfg.sweep->values.size(); ++i) {
      runs.emplace_back(format_number(cfg.sweep->values[i]),
                        apply_sweep(base, cfg.sweep->parameter, cfg.sweep->values[i]));
    }
  } else {
    runs.emplace_back(std::string(), base);
  }

  auto hist = open_out(prefix + ".hist.csv");
  auto ecdf = open_out(prefix + ".ecdf.csv");
  json summary;
  summary["schema_version"] = kSchemaVersion;
  if (!cfg.description.empty()) summary["description"] = cfg.description;
  json run_list = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const ExperimentResult r = run_experiment(runs[i].second);
    write_hist(hist, r, runs[i].first, i == 0);
    write_ecdf(ecdf, r, runs[i].first, i == 0);
    json s = summary_json(r);
    if (cfg.sweep) {
      s["sweep_parameter"] = cfg.sweep->parameter;
      s["sweep_value"] = cfg.sweep->values[i];
      run_list.push_back(s);
    } else {
      summary.update(s);
    }
    out << (runs[i].first.empty() ? "" : runs[i].first + ": ") << "simulated " << r.config.reps << " reps in "
        << r.wall_seconds << " s\n";
  }
  if (cfg.sweep) summary["runs"] = run_list;
  auto sj = open_out(prefix + ".summary.json");
  sj << summary.dump(2) << '\n';
}

void cmd_correct(const GlobalOptions& g, const CorrectOptions& o, std::ostream& out, std::ostream& err) {
  const ConfigFile cfg = load_config(o.config);
  if (!cfg.family || !cfg.calibration) {
    throw Error(ErrorKind::config, "config: correct needs family (the null distribution) and calibration blocks");
  }
  const FamilySpec& fam = *cfg.family;
  const CalibrationBlock& cal = *cfg.calibration;
  const TestMethod method = parse_method(o.method);
  if (method != TestMethod::saddlepoint && method != TestMethod::rstar) {
    throw Error(ErrorKind::config, "correct: --method must be saddlepoint or rstar");
  }
  if (method == TestMethod::rstar && fam.tag() != FamilyTag::gamma_known_shape) {
    throw Error(ErrorKind::config, "correct: rstar needs a gamma family");
  }
  TailForm form = TailForm::rstar_form;
  if (o.tail_form == "lugannani_rice") {
    form = TailForm::lugannani_rice;
  } else if (o.tail_form != "rstar_form") {
    throw Error(ErrorKind::config, "correct: --tail-form must be lugannani_rice or rstar_form");
  }
  const long n = cal.n;
  const double a = cal.a_n.value_or(fam.mean());
  const double b = cal.b_n.value_or(std::sqrt(fam.variance()));
  const double rn = std::sqrt(static_cast<double>(n));
  const bool has_exact = exact_pvalue(fam, n, fam.mean(), cal.sided).has_value();

  std::vector<std::string> header{"id", "rank", "p_normal", std::string("p_") + o.method};
  if (has_exact) header.push_back("p_exact");

  Output os(g.out, out);
  std::ifstream probe(o.input);
  if (!probe) throw Error(ErrorKind::io, "cannot open " + o.input);
  if (probe.peek() == std::ifstream::traits_type::eof()) {
    *os << join(header) << '\n';
    return;
  }
  const CsvTable table = read_csv(probe);
  const auto id_col = table.column("id");
  if (!id_col) throw Error(ErrorKind::config, o.input + ": missing column 'id'");
  const auto stat_col = table.column("statistic");
  const auto mean_col = table.column("observed_mean");
  if (!stat_col && !mean_col) throw Error(ErrorKind::config, o.input + ": need column 'statistic' or 'observed_mean'");

  struct Row {
    std::string id;
    double p_normal, p_method, p_exact;
  };
  std::vector<Row> rows;
  long failures = 0;
  for (const auto& fields : table.rows) {
    Row row{fields[*id_col], std::nan(""), std::nan(""), std::nan("")};
    std::optional<double> xbar;
    std::optional<double> stat;
    if (stat_col) {
      stat = parse_number(fields[*stat_col]);
      if (stat) xbar = a + *stat * b / rn;
    } else {
      xbar = parse_number(fields[*mean_col]);
      if (xbar) stat = rn * (*xbar - a) / b;
    }
    if (!xbar) {
      ++failures;
      rows.push_back(row);
      continue;
    }
    row.p_normal = cal.sided == Sidedness::one_sided ? normal_cdf(*stat)
                                                     : std::min(1.0, 2.0 * normal_cdf(-std::fabs(*stat)));
    try {
      if (method == TestMethod::saddlepoint) {
        row.p_method = corrected_pvalue(fam, n, *xbar, cal.sided, form);
      } else {
        const double shape = fam.as_gamma()->shape;
        const double sum = static_cast<double>(n) * *xbar;
        auto refit = [&](std::optional<double> rate) { return fit_gamma_sufficient(shape, n, sum, rate); };
        row.p_method = rstar_test(refit, 0, fam.as_gamma()->rate, cal.sided).p_value;
      }
    } catch (const Error&) {
      ++failures;
    }
    if (has_exact) {
      try {
        row.p_exact = exact_pvalue(fam, n, *xbar, cal.sided).value_or(std::nan(""));
      } catch (const Error&) {
      }
    }
    rows.push_back(row);
  }

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const double px = rows[x].p_method, py = rows[y].p_method;
    if (std::isnan(px)) return false;
    if (std::isnan(py)) return true;
    return px < py;
  });
  std::vector<std::string> rank(rows.size(), "NA");
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!std::isnan(rows[order[k]].p_method)) rank[order[k]] = std::to_string(k + 1);
  }

  *os << join(header) << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> line{rows[i].id, rank[i], format_number(rows[i].p_normal),
                                  format_number(rows[i].p_method)};
    if (has_exact) line.push_back(format_number(rows[i].p_exact));
    *os << join(line) << '\n';
  }
  if (failures > 0) err << "warning: " << failures << " row(s) could not be corrected (written as NA)\n";
}

void cmd_compare(const GlobalOptions& g, const CompareOptions& o, std::ostream& out) {
  const CsvTable emp = read_csv_file(o.empirical);
  const CsvTable th = read_csv_file(o.theory);
  const auto te = numeric_column(emp, "t", o.empirical);
  const auto tt = numeric_column(th, "t", o.theory);
  if (te.size() != tt.size()) {
    throw Error(ErrorKind::domain, "compare: grids differ in length (" + std::to_string(te.size()) + " vs " +
                                       std::to_string(tt.size()) + ")");
  }
  for (std::size_t i = 0; i < te.size(); ++i) {
    if (std::fabs(te[i] - tt[i]) > 1e-12) {
      throw Error(ErrorKind::domain, "compare: grids differ at row " + std::to_string(i + 1));
    }
  }
  std::string ecol = o.empirical_column;
  if (ecol.empty()) {
    for (const auto& h : emp.header) {
      if (h.rfind("ecdf_", 0) == 0) {
        ecol = h;
        break;
      }
    }
    if (ecol.empty()) ecol = "cdf";
  }
  std::string tcol = o.theory_column;
  if (tcol.empty()) tcol = th.column("theory") ? "theory" : "cdf";
  const auto fe = numeric_column(emp, ecol, o.empirical);
  const auto ft = numeric_column(th, tcol, o.theory);

  double ks = 0.0, where = te.empty() ? 0.0 : te[0];
  for (std::size_t i = 0; i < fe.size(); ++i) {
    if (std::isnan(fe[i]) || std::isnan(ft[i])) throw Error(ErrorKind::domain, "compare: missing value on the grid");
    const double d = std::fabs(fe[i] - ft[i]);
    if (d > ks) {
      ks = d;
      where = te[i];
    }
  }
  Output os(g.out, out);
  *os << "columns " << ecol << " vs " << tcol << '\n';
  *os << "ks " << format_number(ks) << '\n';
  *os << "location " << format_number(where) << '\n';
  if (o.reps >= 1000) {
    std::vector<long> counts(kShapeBins);
    double prev = 0.0;
    for (int b = 0; b < kShapeBins; ++b) {
      const double next = b + 1 == kShapeBins ? 1.0 : interpolate_cdf(te, fe, (b + 1.0) / kShapeBins);
      counts[static_cast<std::size_t>(b)] = std::lround(std::max(0.0, next - prev) * static_cast<double>(o.reps));
      prev = next;
    }
    const ShapeLabel s = classify_shape_counts(counts);
    *os << "shape " << to_string(s.shape) << " low_density " << format_number(s.low_density) << " high_density "
        << format_number(s.high_density) << '\n';
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pvcal: p-value distributions, higher-order corrections and simulation studies"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  std::uint64_t seed = 0;
  int threads = 0;
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides the config)");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads");
  app.add_option("--out", g.out, "output path (simulate: file prefix)");

  PredictOptions po;
  auto* predict = app.add_subcommand("predict", "Edgeworth p-value CDF and density on a grid");
  predict->add_option("--config", po.config, "config file")->required();
  predict->add_option("--grid", po.grid, "lo:hi:step (default 0.0005:0.9995:0.001)");
  predict->add_flag("--clamp", po.clamp, "clamp the CDF to [0, 1]");

  SimulateOptions so;
  long reps = 0;
  auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo experiment");
  simulate->add_option("--config", so.config, "config file")->required();
  auto* reps_opt = simulate->add_option("--reps", reps, "override the replication count");

  CorrectOptions co;
  auto* correct = app.add_subcommand("correct", "corrected p-values for a batch of statistics");
  correct->add_option("--config", co.config, "config file with family and calibration")->required();
  correct->add_option("--method", co.method, "saddlepoint or rstar");
  correct->add_option("--tail-form", co.tail_form, "rstar_form (default) or lugannani_rice");
  correct->add_option("--input", co.input, "CSV with id and statistic or observed_mean")->required();

  CompareOptions cmp;
  auto* compare = app.add_subcommand("compare", "KS distance and shape between two CDF tables");
  compare->add_option("--empirical", cmp.empirical, "ECDF CSV (column t plus values)")->required();
  compare->add_option("--theory", cmp.theory, "theory CSV on the same grid")->required();
  compare->add_option("--empirical-column", cmp.empirical_column, "column to read (default first ecdf_*)");
  compare->add_option("--theory-column", cmp.theory_column, "column to read (default theory, else cdf)");
  compare->add_option("--reps", cmp.reps, "sample size behind the ECDF, for shape SEs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  if (*seed_opt) g.seed = seed;
  if (*threads_opt) g.threads = threads;
  if (*reps_opt) so.reps = reps;

  try {
    if (*predict) cmd_predict(g, po, out);
    if (*simulate) cmd_simulate(g, so, out);
    if (*correct) cmd_correct(g, co, out, err);
    if (*compare) cmd_compare(g, cmp, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::config:
      case ErrorKind::io: return kConfigError;
      default: return kDomainError;
    }
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kOk;
}

}  // namespace pvcal::cli
