#include "cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pvcal/error.hpp"

namespace pvcal::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::config, "config: " + path + ": " + what);
}

// Checked access to one JSON object; rejects keys nobody asked about.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  ~Obj() = default;

  void finish(std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j_.items()) {
      if (!ok.count(key)) fail(sub(key), "unknown field");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& raw(const char* key) const { return j_.at(key); }

  double number(const char* key) const {
    const json& v = need(key);
    if (!v.is_number()) fail(sub(key), "expected a number");
    return v.get<double>();
  }
  double number(const char* key, double dflt) const { return has(key) ? number(key) : dflt; }

  long integer(const char* key) const {
    const json& v = need(key);
    if (!v.is_number_integer()) fail(sub(key), "expected an integer");
    return v.get<long>();
  }
  long integer(const char* key, long dflt) const { return has(key) ? integer(key) : dflt; }

  std::uint64_t u64(const char* key, std::uint64_t dflt) const {
    if (!has(key)) return dflt;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(sub(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool dflt) const {
    if (!has(key)) return dflt;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(sub(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const char* key) const {
    const json& v = need(key);
    if (!v.is_string()) fail(sub(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const char* key, const std::string& dflt) const { return has(key) ? string(key) : dflt; }

  std::vector<double> numbers(const char* key) const {
    const json& v = need(key);
    if (!v.is_array()) fail(sub(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(sub(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<std::string> strings(const char* key) const {
    const json& v = need(key);
    if (!v.is_array()) fail(sub(key), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) fail(sub(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

 private:
  const json& need(const char* key) const {
    if (!j_.contains(key)) fail(sub(key), "missing required field");
    return j_.at(key);
  }

  const json& j_;
  std::string path_;
};

template <class F>
auto wrap_domain(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(path, e.what());
  }
}

FamilySpec parse_family(const json& j, const std::string& path) {
  Obj o(j, path);
  const std::string type = o.string("type");
  return wrap_domain(path, [&]() -> FamilySpec {
    if (type == "gamma") {
      o.finish({"type", "shape", "rate"});
      return FamilySpec::gamma(o.number("shape"), o.number("rate"));
    }
    if (type == "normal") {
      o.finish({"type", "mean", "sd"});
      return FamilySpec::normal(o.number("mean"), o.number("sd"));
    }
    if (type == "multinomial_share") {
      o.finish({"type", "probs"});
      const auto p = o.numbers("probs");
      if (p.size() != 3) fail(o.sub("probs"), "expected three probabilities");
      return FamilySpec::multinomial_share(p[0], p[1], p[2]);
    }
    if (type == "bernoulli") {
      o.finish({"type", "p"});
      return FamilySpec::bernoulli(o.number("p"));
    }
    if (type == "binomial") {
      o.finish({"type", "trials", "p"});
      return FamilySpec::binomial(static_cast<int>(o.integer("trials")), o.number("p"));
    }
    if (type == "tabulated") {
      o.finish({"type", "support", "probs"});
      return FamilySpec::tabulated(o.numbers("support"), o.numbers("probs"));
    }
    fail(o.sub("type"), "unknown family '" + type + "'");
  });
}

CalibrationBlock parse_calibration(const json& j, const std::string& path) {
  Obj o(j, path);
  o.finish({"n", "a_n", "b_n", "sided"});
  CalibrationBlock c;
  c.n = o.integer("n");
  if (c.n < 1) fail(o.sub("n"), "must be >= 1");
  if (o.has("a_n")) c.a_n = o.number("a_n");
  if (o.has("b_n")) {
    c.b_n = o.number("b_n");
    if (!(*c.b_n > 0.0)) fail(o.sub("b_n"), "must be positive");
  }
  if (o.has("sided")) {
    try {
      c.sided = parse_sided(o.string("sided"));
    } catch (const Error& e) {
      fail(o.sub("sided"), e.what());
    }
  }
  return c;
}

Scenario parse_scenario(const std::string& s, const std::string& path) {
  if (s == "gamma_clt") return Scenario::gamma_clt;
  if (s == "linkage") return Scenario::linkage;
  if (s == "logistic_gwas") return Scenario::logistic_gwas;
  if (s == "weibull_many_nuisance") return Scenario::weibull_many_nuisance;
  fail(path, "unknown scenario '" + s + "'");
}

TheoryKind parse_theory(const std::string& s, const std::string& path) {
  if (s == "automatic") return TheoryKind::automatic;
  if (s == "edgeworth") return TheoryKind::edgeworth;
  if (s == "correct_variance") return TheoryKind::correct_variance;
  if (s == "uniform") return TheoryKind::uniform;
  fail(path, "unknown theory '" + s + "'");
}

ExperimentConfig parse_experiment(const json& j, const std::string& path) {
  Obj o(j, path);
  o.finish({"scenario", "n", "reps", "seed", "methods", "sided", "workers", "tail_form", "theory", "alphas", "gamma",
            "linkage", "gwas", "weibull"});
  ExperimentConfig c;
  c.scenario = parse_scenario(o.string("scenario"), o.sub("scenario"));
  c.n = o.integer("n");
  c.reps = o.integer("reps");
  c.seed = o.u64("seed", 1);
  c.workers = static_cast<int>(o.integer("workers", 1));
  c.methods.clear();
  for (const auto& m : o.strings("methods")) {
    try {
      c.methods.push_back(parse_method(m));
    } catch (const Error& e) {
      fail(o.sub("methods"), e.what());
    }
  }
  if (o.has("sided")) {
    try {
      c.sided = parse_sided(o.string("sided"));
    } catch (const Error& e) {
      fail(o.sub("sided"), e.what());
    }
  }
  const std::string form = o.string("tail_form", "lugannani_rice");
  if (form == "lugannani_rice") {
    c.tail_form = TailForm::lugannani_rice;
  } else if (form == "rstar_form") {
    c.tail_form = TailForm::rstar_form;
  } else {
    fail(o.sub("tail_form"), "expected lugannani_rice or rstar_form");
  }
  c.theory = parse_theory(o.string("theory", "automatic"), o.sub("theory"));
  if (o.has("alphas")) c.alphas = o.numbers("alphas");

  if (o.has("gamma")) {
    Obj g(o.raw("gamma"), o.sub("gamma"));
    g.finish({"shape", "null_rate", "true_rate"});
    c.gamma.shape = g.number("shape", c.gamma.shape);
    c.gamma.null_rate = g.number("null_rate", c.gamma.null_rate);
    c.gamma.true_rate = g.number("true_rate", c.gamma.null_rate);
  }
  if (o.has("linkage")) {
    Obj l(o.raw("linkage"), o.sub("linkage"));
    l.finish({"truth"});
    const auto t = l.numbers("truth");
    if (t.size() != 3) fail(l.sub("truth"), "expected three probabilities");
    c.linkage.truth = {t[0], t[1], t[2]};
  }
  if (o.has("gwas")) {
    Obj g(o.raw("gwas"), o.sub("gwas"));
    g.finish({"maf", "x1_prob", "x2_mean", "x2_sd", "beta", "fixed_labels"});
    c.gwas.maf = g.number("maf", c.gwas.maf);
    c.gwas.x1_prob = g.number("x1_prob", c.gwas.x1_prob);
    c.gwas.x2_mean = g.number("x2_mean", c.gwas.x2_mean);
    c.gwas.x2_sd = g.number("x2_sd", c.gwas.x2_sd);
    if (g.has("beta")) {
      const auto b = g.numbers("beta");
      if (b.size() != 4) fail(g.sub("beta"), "expected four coefficients (intercept, snp, x1, x2)");
      c.gwas.beta = {b[0], b[1], b[2], b[3]};
    }
    c.gwas.fixed_labels = g.boolean("fixed_labels", false);
  }
  if (o.has("weibull")) {
    Obj w(o.raw("weibull"), o.sub("weibull"));
    w.finish({"k", "shape", "scale"});
    c.weibull.k = static_cast<int>(w.integer("k", c.weibull.k));
    c.weibull.shape = w.number("shape", c.weibull.shape);
    c.weibull.scale = w.number("scale", c.weibull.scale);
  }
  try {
    c.validate();
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return c;
}

}  // namespace

TestMethod parse_method(const std::string& name) {
  if (name == "normal") return TestMethod::normal;
  if (name == "saddlepoint") return TestMethod::saddlepoint;
  if (name == "rstar") return TestMethod::rstar;
  if (name == "score") return TestMethod::score;
  if (name == "wald") return TestMethod::wald;
  throw Error(ErrorKind::config, "unknown method '" + name + "'");
}

Sidedness parse_sided(const std::string& name) {
  if (name == "one_sided") return Sidedness::one_sided;
  if (name == "two_sided") return Sidedness::two_sided;
  throw Error(ErrorKind::config, "expected one_sided or two_sided, got '" + name + "'");
}

ConfigFile parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config, "config: malformed JSON at byte offset " + std::to_string(e.byte) + ": " +
                                       e.what());
  }
  Obj o(root, "");
  o.finish({"schema_version", "description", "experiment", "sweep", "family", "calibration"});
  const long version = o.integer("schema_version");
  if (version != kSchemaVersion) {
    fail("schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                               std::to_string(kSchemaVersion) + ")");
  }
  ConfigFile cfg;
  cfg.description = o.string("description", "");
  if (o.has("experiment")) cfg.experiment = parse_experiment(o.raw("experiment"), "experiment");
  if (o.has("family")) cfg.family = parse_family(o.raw("family"), "family");
  if (o.has("calibration")) cfg.calibration = parse_calibration(o.raw("calibration"), "calibration");
  if (o.has("sweep")) {
    if (!cfg.experiment) fail("sweep", "needs an experiment block");
    Obj s(o.raw("sweep"), "sweep");
    s.finish({"parameter", "values"});
    Sweep sw;
    sw.parameter = s.string("parameter");
    sw.values = s.numbers("values");
    if (sw.values.empty()) fail("sweep.values", "must not be empty");
    for (const double v : sw.values) {
      try {
        apply_sweep(*cfg.experiment, sw.parameter, v).validate();
      } catch (const Error& e) {
        fail("sweep", e.what());
      }
    }
    cfg.sweep = sw;
  }
  return cfg;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ExperimentConfig apply_sweep(const ExperimentConfig& base, const std::string& parameter, double value) {
  ExperimentConfig c = base;
  if (parameter == "gamma.true_rate") {
    c.gamma.true_rate = value;
  } else if (parameter == "gamma.shape") {
    c.gamma.shape = value;
  } else if (parameter == "gamma.null_rate") {
    c.gamma.null_rate = value;
  } else if (parameter == "n") {
    c.n = static_cast<long>(value);
  } else if (parameter == "gwas.maf") {
    c.gwas.maf = value;
  } else if (parameter == "gwas.beta_snp") {
    c.gwas.beta[1] = value;
  } else if (parameter == "weibull.k") {
    c.weibull.k = static_cast<int>(value);
  } else {
    throw Error(ErrorKind::config, "config: sweep.parameter: cannot sweep '" + parameter + "'");
  }
  return c;
}

}  // namespace pvcal::cli
