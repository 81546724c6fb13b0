// pnar: fit, test, simulate and ic-scan subcommands over CSV panels.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pnar/pnar.hpp"

using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct DataArgs {
  std::string panel;
  std::string adjacency;
  std::string covariates;
  bool transpose = false;
  bool undirected = false;
};

struct ModelArgs {
  std::string family = "linear";
  int p = 1;
  int d = 1;
  std::optional<double> threshold;
};

struct FitArgs {
  int maxeval = 100;
  double xtol_rel = 1e-8;
  bool unconstrained = false;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--panel", a.panel, "count panel CSV, T rows x N columns")->required();
  cmd->add_option("--adjacency", a.adjacency, "adjacency CSV, N x N, no header")->required();
  cmd->add_option("--covariates", a.covariates, "covariate CSV, N rows x q columns");
  cmd->add_flag("--transpose", a.transpose, "panel file is N rows x T columns");
  cmd->add_flag("--undirected", a.undirected, "require a symmetric adjacency matrix");
}

void add_fit_options(CLI::App* cmd, FitArgs& a) {
  cmd->add_option("--maxeval", a.maxeval, "optimizer iteration cap")->check(CLI::PositiveNumber);
  cmd->add_option("--xtol-rel", a.xtol_rel, "relative parameter tolerance")->check(CLI::PositiveNumber);
  cmd->add_flag("--unconstrained", a.unconstrained, "drop sign and stationarity constraints");
}

pnar::NetworkPanel load_data(const DataArgs& a) {
  const auto adj_csv = pnar::io::read_csv(a.adjacency);
  pnar::Adjacency adj(adj_csv.values, !a.undirected);
  const auto panel_csv = pnar::io::read_csv(a.panel);
  Eigen::MatrixXd y;
  if (a.transpose) {
    y = panel_csv.values;
  } else if (panel_csv.values.cols() != adj.n() && panel_csv.values.rows() == adj.n()) {
    std::cerr << "warning: panel has " << panel_csv.values.rows()
              << " rows matching the node count; reading it as N x T (use --transpose to silence)\n";
    y = panel_csv.values;
  } else {
    y = panel_csv.values.transpose();
  }
  if (y.rows() != adj.n())
    throw pnar::ValidationError("panel has " + std::to_string(y.rows()) + " node columns but the adjacency has " +
                                std::to_string(adj.n()) + " nodes");
  Eigen::MatrixXd z;
  if (!a.covariates.empty()) z = pnar::io::read_csv(a.covariates).values;
  return pnar::NetworkPanel(pnar::CountPanel(std::move(y)), std::move(adj), std::move(z));
}

pnar::FitOptions fit_options(const FitArgs& a) {
  pnar::FitOptions o;
  o.maxeval = a.maxeval;
  o.xtol_rel = a.xtol_rel;
  o.constrained = !a.unconstrained;
  return o;
}

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json fit_json(const pnar::FitResult& fr) {
  ordered_json j;
  j["family"] = pnar::to_string(fr.spec.family);
  j["p"] = fr.spec.p;
  j["q"] = fr.spec.q;
  j["d"] = fr.spec.d;
  if (fr.spec.family == pnar::Family::threshold) j["threshold"] = fr.theta_hat.gamma;
  ordered_json coefs = ordered_json::array();
  for (std::size_t k = 0; k < fr.names.size(); ++k) {
    coefs.push_back({{"name", fr.names[k]},
                     {"estimate", number_or_null(fr.estimate(k))},
                     {"se", number_or_null(fr.se(k))},
                     {"z", number_or_null(fr.zstat(k))},
                     {"pval", number_or_null(fr.pval(k))}});
  }
  j["coefs"] = coefs;
  j["loglik"] = number_or_null(fr.loglik);
  j["aic"] = number_or_null(fr.aic);
  j["bic"] = number_or_null(fr.bic);
  j["qic"] = number_or_null(fr.qic);
  j["converged"] = fr.converged;
  j["iterations"] = fr.iterations;
  j["score_sup_norm"] = number_or_null(fr.score_sup_norm());
  j["warnings"] = fr.warnings;
  return j;
}

std::string coefficient_table(const pnar::FitResult& fr) {
  std::ostringstream os;
  os << to_string(fr.spec.family) << " PNAR(" << fr.spec.p << "," << fr.spec.q << ")\n";
  os << std::left << std::setw(10) << "" << std::right << std::setw(12) << "Estimate" << std::setw(12) << "Std.Error"
     << std::setw(10) << "z value" << std::setw(12) << "Pr(>|z|)" << "\n";
  for (std::size_t k = 0; k < fr.names.size(); ++k) {
    os << std::left << std::setw(10) << fr.names[k] << std::right << std::setw(12) << std::setprecision(6)
       << fr.estimate(k) << std::setw(12) << fr.se(k) << std::setw(10) << std::setprecision(3) << fr.zstat(k)
       << std::setw(12) << std::setprecision(4) << fr.pval(k) << " " << pnar::stats::significance_stars(fr.pval(k))
       << "\n";
  }
  os << "---\nSignif. codes:  0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n";
  os << std::setprecision(8) << "log-likelihood: " << fr.loglik << "  AIC: " << fr.aic << "  BIC: " << fr.bic
     << "  QIC: " << fr.qic << "\n";
  os << "converged: " << (fr.converged ? "yes" : "no") << " after " << fr.iterations
     << " iterations; sup-norm of the score: " << std::setprecision(3) << fr.score_sup_norm() << "\n";
  return os.str();
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out);
  if (!f) throw pnar::ValidationError("cannot write '" + out + "'");
  f << text;
}

pnar::ModelSpec model_spec(const ModelArgs& m, int q) {
  pnar::ModelSpec s{pnar::family_from_string(m.family), m.p, q, m.d};
  s.validate();
  return s;
}

pnar::FitResult run_fit(const pnar::NetworkPanel& data, const pnar::ModelSpec& spec, const ModelArgs& m,
                        const FitArgs& f) {
  pnar::FitOptions opt = fit_options(f);
  if (spec.family == pnar::Family::threshold) {
    // the threshold is not estimated; default to the middle of the quantile band
    pnar::Theta start = pnar::init_ls(data, spec);
    start.gamma = m.threshold ? *m.threshold : [&] {
      const auto band = pnar::gamma_band_t(data);
      return 0.5 * (band.lower + band.upper);
    }();
    pnar::detail::require(start.gamma >= 0.0, "threshold must be non-negative");
    opt.init = start;
  }
  return pnar::fit_qmle(data, spec, opt);
}

int cmd_fit(const DataArgs& da, const ModelArgs& ma, const FitArgs& fa, const std::string& out) {
  const auto data = load_data(da);
  const auto spec = model_spec(ma, data.q());
  const auto fr = run_fit(data, spec, ma, fa);
  const std::string js = fit_json(fr).dump(2) + "\n";
  const std::string table = coefficient_table(fr);
  if (out.empty()) {
    std::cerr << table;
    std::cout << js;
  } else {
    emit(out, js);
    std::cout << table;
  }
  for (const auto& w : fr.warnings) std::cerr << "warning: " << w << "\n";
  return kExitOk;
}

struct TestArgs {
  std::string alt = "id";
  std::string method;
  int J = 499;
  std::optional<double> gamma_l, gamma_u;
  std::optional<int> len;
  std::string weights = "normal";
  std::string fit;
  std::string averaging = "pooled";
};

pnar::Theta restricted_estimate(const pnar::NetworkPanel& data, const pnar::ModelSpec& lin, const TestArgs& ta,
                                const FitArgs& fa) {
  if (ta.fit.empty()) {
    const auto fr = pnar::fit_qmle(data, lin, fit_options(fa));
    for (const auto& w : fr.warnings) std::cerr << "warning: " << w << "\n";
    return fr.theta_hat;
  }
  std::ifstream in(ta.fit);
  if (!in) throw pnar::ValidationError("cannot open fit report '" + ta.fit + "'");
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw pnar::ValidationError("fit report '" + ta.fit + "' is not valid JSON: " + e.what());
  }
  if (j.value("family", "") != "linear" || j.value("p", -1) != lin.p || j.value("q", -1) != lin.q)
    throw pnar::ValidationError("fit report must come from a linear PNAR(" + std::to_string(lin.p) + "," +
                                std::to_string(lin.q) + ") fit");
  Eigen::VectorXd v(lin.size());
  const auto& coefs = j.at("coefs");
  if (static_cast<int>(coefs.size()) != lin.size()) throw pnar::ValidationError("fit report has the wrong number of coefficients");
  for (int k = 0; k < lin.size(); ++k) v(k) = coefs[k].at("estimate").get<double>();
  return pnar::Theta::linear(lin, v);
}

ordered_json test_json(const pnar::LmTestReport& r) {
  ordered_json j;
  j["method"] = pnar::to_string(r.method);
  j["alternative"] = pnar::to_string(r.alternative);
  j["statistic"] = r.statistic;
  j["df"] = r.df;
  j["pvalue"] = r.pvalue;
  j["gamma_opt"] = r.gamma_opt ? ordered_json(*r.gamma_opt) : ordered_json(nullptr);
  if (r.bootstrap) {
    j["J"] = r.bootstrap->J;
    j["pJ"] = r.bootstrap->pJ;
    j["cpJ"] = r.bootstrap->cpJ;
    j["seed"] = r.bootstrap->seed;
  } else {
    j["J"] = nullptr;
    j["pJ"] = nullptr;
    j["cpJ"] = nullptr;
    j["seed"] = nullptr;
  }
  if (r.band)
    j["band"] = {{"gamma_L", r.band->lower}, {"gamma_U", r.band->upper}, {"len", r.band->len}};
  else
    j["band"] = nullptr;
  j["warnings"] = r.warnings;
  return j;
}

int cmd_test(const DataArgs& da, ModelArgs ma, const FitArgs& fa, const TestArgs& ta, const std::string& out,
             std::uint64_t seed, int workers) {
  const pnar::Family alt = pnar::family_from_string(ta.alt);
  if (!(alt == pnar::Family::intercept_drift || alt == pnar::Family::smooth_transition ||
        alt == pnar::Family::threshold))
    throw pnar::ValidationError("--alt must be id, st or t");
  std::string method = ta.method;
  if (method.empty()) method = alt == pnar::Family::intercept_drift ? "chisq" : alt == pnar::Family::smooth_transition ? "davies" : "bootstrap";
  if (alt == pnar::Family::intercept_drift && method != "chisq")
    throw pnar::ValidationError("the id alternative is tested with --method chisq");
  if (alt != pnar::Family::intercept_drift && method == "chisq")
    throw pnar::ValidationError("the " + ta.alt + " alternative has an unidentified nuisance parameter; use davies or bootstrap");
  if (alt == pnar::Family::threshold && method == "davies")
    throw pnar::ValidationError("Davies' bound cannot be applied to the threshold alternative; use --method bootstrap");
  if (method != "chisq" && method != "davies" && method != "bootstrap")
    throw pnar::ValidationError("unknown --method '" + method + "'");

  const auto data = load_data(da);
  ma.family = "linear";
  const pnar::ModelSpec lin = model_spec(ma, data.q());
  const pnar::ModelSpec alt_spec{alt, ma.p, data.q(), ma.d};
  alt_spec.validate();
  const pnar::Theta theta = restricted_estimate(data, lin, ta, fa);

  pnar::LmTestReport rep;
  if (alt == pnar::Family::intercept_drift) {
    rep = pnar::score_test_id(theta, data, alt_spec);
  } else {
    const int len = ta.len ? *ta.len : (method == "davies" ? 100 : 10);
    pnar::GammaGrid band;
    if (alt == pnar::Family::smooth_transition) {
      const auto avg = ta.averaging == "per-node" ? pnar::BandAveraging::per_node : pnar::BandAveraging::pooled;
      if (ta.averaging != "pooled" && ta.averaging != "per-node")
        throw pnar::ValidationError("--averaging must be pooled or per-node");
      band = pnar::gamma_band_st(data, ma.p, ma.d, len, avg);
    } else {
      band = pnar::gamma_band_t(data, len);
    }
    if (ta.gamma_l) band.lower = *ta.gamma_l;
    if (ta.gamma_u) band.upper = *ta.gamma_u;
    band.validate();
    if (method == "davies") {
      rep = pnar::davies_test(theta, data, alt_spec, band);
    } else {
      pnar::BootstrapOptions bo;
      bo.J = ta.J;
      bo.workers = workers;
      bo.seed = seed;
      if (ta.weights == "rademacher")
        bo.multiplier = pnar::Multiplier::rademacher;
      else if (ta.weights != "normal")
        throw pnar::ValidationError("--weights must be normal or rademacher");
      rep = pnar::bootstrap_test(theta, data, alt_spec, band, bo);
    }
  }
  emit(out, test_json(rep).dump(2) + "\n");
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  return kExitOk;
}

struct SimArgs {
  std::string theta;
  int T = 100;
  int N = 10;
  std::string network = "sbm";
  std::string adjacency;
  double prob = 0.3;
  int blocks = 2;
  double alpha = 0.7;
  bool directed = true;
  std::string copula = "gaussian";
  std::string corr = "equicorrelation";
  double rho = 0.0;
  double dof = 4.0;
  int K = 100;
  int burn_in = 500;
  std::string config_out;
  std::string adjacency_out;
  std::string covariates;
  bool strict = false;
};

Eigen::VectorXd parse_vector(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double x = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size())
      throw pnar::ValidationError("--theta: '" + item + "' is not a number");
    v.push_back(x);
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int cmd_simulate(const ModelArgs& ma, const SimArgs& sa, const std::string& out, std::uint64_t seed) {
  pnar::detail::require(!sa.theta.empty(), "--theta is required (packed coefficients, comma separated)");
  pnar::Adjacency adj;
  // the network uses the seed directly, the count stream a scrambled copy of it
  const std::uint64_t net_seed = seed;
  if (sa.network == "file") {
    pnar::detail::require(!sa.adjacency.empty(), "--network file needs --adjacency");
    adj = pnar::Adjacency(pnar::io::read_csv(sa.adjacency).values, sa.directed);
  } else if (sa.network == "erdos") {
    adj = pnar::gen_erdos_renyi(sa.N, sa.prob, net_seed, sa.directed);
  } else if (sa.network == "sbm") {
    adj = pnar::gen_sbm(sa.N, sa.blocks, sa.alpha, sa.directed, net_seed);
  } else {
    throw pnar::ValidationError("--network must be erdos, sbm or file");
  }
  Eigen::MatrixXd z;
  if (!sa.covariates.empty()) z = pnar::io::read_csv(sa.covariates).values;
  const int q = static_cast<int>(z.cols());

  pnar::SimConfig cfg;
  cfg.spec = model_spec(ma, q);
  const Eigen::VectorXd packed = parse_vector(sa.theta);
  cfg.theta = pnar::Theta::zeros(cfg.spec).with_packed(cfg.spec, packed);
  if (cfg.spec.family == pnar::Family::threshold) {
    pnar::detail::require(ma.threshold.has_value(), "the threshold family needs --threshold");
    cfg.theta.gamma = *ma.threshold;
  }
  cfg.adj = adj;
  cfg.z = z;
  cfg.T = sa.T;
  cfg.burn_in = sa.burn_in;
  cfg.K = sa.K;
  cfg.copula.family = pnar::copula_from_string(sa.copula);
  cfg.copula.corrtype = pnar::corrtype_from_string(sa.corr);
  cfg.copula.rho = sa.rho;
  cfg.copula.dof = sa.dof;
  cfg.seed = pnar::detail::splitmix64(seed);
  cfg.strict = sa.strict;
  const pnar::SimResult res = pnar::simulate(cfg);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";

  std::ostringstream panel;
  pnar::io::write_panel_csv(panel, res.counts);
  emit(out, panel.str());
  if (!sa.adjacency_out.empty()) {
    std::ostringstream a;
    pnar::io::write_matrix_csv(a, adj.weights());
    emit(sa.adjacency_out, a.str());
  }
  std::string config_path = sa.config_out;
  if (config_path.empty() && !out.empty()) config_path = out + ".json";
  if (!config_path.empty()) {
    ordered_json j;
    j["family"] = pnar::to_string(cfg.spec.family);
    j["p"] = cfg.spec.p;
    j["q"] = cfg.spec.q;
    j["d"] = cfg.spec.d;
    j["theta"] = std::vector<double>(packed.data(), packed.data() + packed.size());
    j["parameter_names"] = pnar::parameter_names(cfg.spec);
    j["threshold"] = cfg.spec.family == pnar::Family::threshold ? ordered_json(cfg.theta.gamma) : ordered_json(nullptr);
    j["T"] = cfg.T;
    j["N"] = adj.n();
    j["burn_in"] = cfg.burn_in;
    j["K"] = cfg.K;
    j["K_used"] = res.K_used;
    j["network"] = {{"type", sa.network}, {"directed", adj.directed()}};
    if (sa.network == "erdos") j["network"]["prob"] = sa.prob;
    if (sa.network == "sbm") {
      j["network"]["blocks"] = sa.blocks;
      j["network"]["alpha"] = sa.alpha;
    }
    if (sa.network == "file") j["network"]["adjacency"] = sa.adjacency;
    j["copula"] = {{"family", pnar::to_string(cfg.copula.family)},
                   {"corrtype", pnar::to_string(cfg.copula.corrtype)},
                   {"rho", cfg.copula.rho},
                   {"dof", cfg.copula.dof}};
    j["seed"] = seed;
    j["warnings"] = res.warnings;
    emit(config_path, j.dump(2) + "\n");
  }
  return kExitOk;
}

std::vector<int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  int a = 0, b = 0;
  try {
    if (dots == std::string::npos) {
      a = b = std::stoi(s);
    } else {
      a = std::stoi(s.substr(0, dots));
      b = std::stoi(s.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw pnar::ValidationError("--p-range must look like a..b, got '" + s + "'");
  }
  pnar::detail::require(a >= 1 && b >= a, "--p-range must satisfy 1 <= a <= b, got '" + s + "'");
  std::vector<int> out;
  for (int p = a; p <= b; ++p) out.push_back(p);
  return out;
}

int cmd_ic_scan(const DataArgs& da, const FitArgs& fa, const std::string& range, const std::string& criterion,
                const std::string& out) {
  const auto data = load_data(da);
  const auto crit = pnar::criterion_from_string(criterion);
  const auto rows = pnar::ic_scan(data, parse_range(range), crit, fit_options(fa));
  std::ostringstream os;
  os << "p,value,loglik,aic,bic,qic,converged\n";
  for (const auto& r : rows) {
    os << r.p << "," << pnar::io::format_number(r.value) << "," << pnar::io::format_number(r.loglik) << ","
       << pnar::io::format_number(r.aic) << "," << pnar::io::format_number(r.bic) << ","
       << pnar::io::format_number(r.qic) << "," << (r.ok && r.converged ? "true" : "false") << "\n";
    if (!r.ok) std::cerr << "warning: p = " << r.p << ": " << r.message << "\n";
  }
  emit(out, os.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson network autoregression: fit, test, simulate, ic-scan"};
  app.require_subcommand(1);
  std::string out;
  std::uint64_t seed = 1234;
  int workers = 1;
  app.add_option("--out", out, "output file (default: stdout)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--workers", workers, "bootstrap worker threads")->check(CLI::PositiveNumber);

  DataArgs da;
  ModelArgs ma;
  FitArgs fa;
  auto add_model = [&](CLI::App* cmd, bool with_family) {
    if (with_family) cmd->add_option("--family", ma.family, "linear|loglinear|id|st|t");
    cmd->add_option("--p", ma.p, "lag order")->check(CLI::PositiveNumber);
    cmd->add_option("--d", ma.d, "delay of the nonlinear term")->check(CLI::PositiveNumber);
  };
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--out", out, "output file (default: stdout)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--workers", workers, "bootstrap worker threads")->check(CLI::PositiveNumber);
  };

  auto* fit = app.add_subcommand("fit", "quasi maximum likelihood fit");
  add_data_options(fit, da);
  add_model(fit, true);
  add_fit_options(fit, fa);
  add_globals(fit);
  fit->add_option("--threshold", ma.threshold, "fixed threshold for the t family");

  TestArgs ta;
  auto* test = app.add_subcommand("test", "linearity test against id, st or t");
  add_data_options(test, da);
  add_model(test, false);
  add_fit_options(test, fa);
  add_globals(test);
  test->add_option("--alt", ta.alt, "id|st|t");
  test->add_option("--method", ta.method, "chisq|davies|bootstrap (default: chisq for id, davies for st, bootstrap for t)");
  test->add_option("--J", ta.J, "bootstrap replicates")->check(CLI::PositiveNumber);
  test->add_option("--gamma-l", ta.gamma_l, "lower end of the gamma band");
  test->add_option("--gamma-u", ta.gamma_u, "upper end of the gamma band");
  test->add_option("--len", ta.len, "grid length (default 100 for davies, 10 otherwise)");
  test->add_option("--weights", ta.weights, "bootstrap multipliers: normal|rademacher");
  test->add_option("--averaging", ta.averaging, "st band averaging: pooled|per-node");
  test->add_option("--fit", ta.fit, "linear fit report JSON to reuse");

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "copula-Poisson simulation");
  add_model(sim, true);
  add_globals(sim);
  sim->add_option("--theta", sa.theta, "packed coefficients, comma separated")->required();
  sim->add_option("--threshold", ma.threshold, "threshold for the t family");
  sim->add_option("--T", sa.T, "number of time points")->check(CLI::PositiveNumber);
  sim->add_option("--N", sa.N, "number of nodes")->check(CLI::PositiveNumber);
  sim->add_option("--network", sa.network, "erdos|sbm|file");
  sim->add_option("--adjacency", sa.adjacency, "adjacency CSV for --network file");
  sim->add_option("--adjacency-out", sa.adjacency_out, "write the network used");
  sim->add_option("--covariates", sa.covariates, "covariate CSV, N rows x q columns");
  sim->add_option("--prob", sa.prob, "Erdos-Renyi edge probability");
  sim->add_option("--blocks", sa.blocks, "SBM block count");
  sim->add_option("--alpha", sa.alpha, "SBM within-block density scale");
  sim->add_option("--directed", sa.directed, "directed network (true|false)");
  sim->add_option("--copula", sa.copula, "gaussian|t|clayton");
  sim->add_option("--corr", sa.corr, "equicorrelation|toeplitz");
  sim->add_option("--rho", sa.rho, "copula dependence parameter");
  sim->add_option("--dof", sa.dof, "t copula degrees of freedom");
  sim->add_option("--K", sa.K, "waiting-time cap")->check(CLI::PositiveNumber);
  sim->add_option("--burn-in", sa.burn_in, "discarded initial steps")->check(CLI::NonNegativeNumber);
  sim->add_option("--config-out", sa.config_out, "configuration JSON (default: <out>.json)");
  sim->add_flag("--strict", sa.strict, "reject non-stationary parameters");

  std::string range = "1..10";
  std::string criterion = "qic";
  auto* scan = app.add_subcommand("ic-scan", "information criteria over lag orders");
  add_data_options(scan, da);
  add_fit_options(scan, fa);
  add_globals(scan);
  scan->add_option("--p-range", range, "lag orders a..b");
  scan->add_option("--criterion", criterion, "aic|bic|qic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*fit) return cmd_fit(da, ma, fa, out);
    if (*test) return cmd_test(da, ma, fa, ta, out, seed, workers);
    if (*sim) return cmd_simulate(ma, sa, out, seed);
    if (*scan) return cmd_ic_scan(da, fa, range, criterion, out);
  } catch (const pnar::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const pnar::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
