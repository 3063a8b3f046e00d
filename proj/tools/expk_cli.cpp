#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "expk/bseries.hpp"
#include "expk/harness.hpp"
#include "expk/tableau.hpp"
#include "expk/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitUnstable = 3;

// Common sweep options shared by converge and workprec.
struct SweepOpts {
  std::string problem = "lorenz96";
  int size_a = 0;
  int size_b = 0;
  std::string methods = "expk";
  std::string variant;
  int m = 0;
  double tol = 0.0;
  std::string h_list;
  std::string tspan;
  std::string out;
  std::string config;
  unsigned long seed = 0;
  bool no_timing = false;
  std::string cache_dir = ".expk_cache";
};

void add_sweep_flags(CLI::App* cmd, SweepOpts& o) {
  cmd->add_option("--problem", o.problem,
                  "Problem name: lorenz96, shallow-water, allen-cahn");
  cmd->add_option("--size-a", o.size_a, "Leading grid size (0 = default)");
  cmd->add_option("--size-b", o.size_b, "Second grid size (0 = default)");
  cmd->add_option("--method", o.methods,
                  "Comma list of scheme ids (expk, exp4[,k,sp], erow4[,k,sp])");
  cmd->add_option("--variant", o.variant,
                  "Override variant on all methods: standard, ktype, sp");
  cmd->add_option("--M", o.m, "Krylov dimension for fixed-basis variants");
  cmd->add_option("--tol", o.tol, "Adaptive tolerance for standard variants");
  cmd->add_option("--h-list", o.h_list, "Comma list of stepsizes, decreasing");
  cmd->add_option("--tspan", o.tspan, "Integration window as t0:t1");
  cmd->add_option("--out", o.out, "CSV output path (default: stdout)");
  cmd->add_option("--config", o.config, "key=value config file, flags win");
  cmd->add_option("--seed", o.seed, "Seed recorded with the run");
  cmd->add_flag("--no-timing", o.no_timing,
                "Zero the wall_s column for reproducible CSVs");
  cmd->add_option("--cache-dir", o.cache_dir,
                  "Reference endpoint cache directory");
}

// Default stepsize grids per problem; converge needs at least three.
std::string default_h_list(const std::string& problem) {
  if (problem == "lorenz96") return "0.015,0.0075,0.00375,0.001875";
  if (problem == "shallow-water") return "0.002,0.001,0.0005,0.00025";
  if (problem == "allen-cahn") return "0.01,0.005,0.0025,0.00125";
  throw expk::config_error("no default stepsizes for problem '" + problem +
                           "'");
}

// Builds the run configuration with precedence: config file, then flags,
// then per-problem defaults for anything still unset.
expk::RunConfig assemble(const SweepOpts& o, const CLI::App* cmd) {
  expk::RunConfig cfg;
  bool m_explicit = false;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in)
      throw expk::config_error("config: cannot open '" + o.config + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    for (const auto& [k, v] : expk::detail::parse_kv_text(buf.str())) {
      expk::apply_config_entry(cfg, k, v);
      if (k == "scheme.M") m_explicit = true;
    }
  }
  if (cmd->count("--problem") || cfg.problem.empty()) cfg.problem = o.problem;
  if (cmd->count("--size-a")) cfg.size_a = o.size_a;
  if (cmd->count("--size-b")) cfg.size_b = o.size_b;
  if (cmd->count("--method") || cfg.schemes.empty())
    cfg.schemes = expk::parse_scheme_list(o.methods);
  if (cmd->count("--variant")) {
    const expk::Variant v = expk::parse_variant(o.variant);
    for (auto& s : cfg.schemes) s.variant = v;
  }
  if (cmd->count("--M")) {
    if (o.m < 1) throw expk::config_error("--M must be >= 1");
    for (auto& s : cfg.schemes) s.M = o.m;
    m_explicit = true;
  }
  if (cmd->count("--tol")) {
    if (!(o.tol > 0)) throw expk::config_error("--tol must be positive");
    for (auto& s : cfg.schemes) s.adaptive.tol = o.tol;
  }
  if (cmd->count("--h-list")) cfg.h_list = expk::parse_h_list(o.h_list);
  if (cfg.h_list.empty())
    cfg.h_list = expk::parse_h_list(default_h_list(cfg.problem));
  if (cmd->count("--tspan")) cfg.tspan = expk::parse_tspan(o.tspan);
  if (cmd->count("--out")) cfg.out = o.out;
  if (cmd->count("--seed")) cfg.seed = o.seed;
  if (o.no_timing) cfg.no_timing = true;
  if (cmd->count("--cache-dir")) cfg.cache_dir = o.cache_dir;

  if (!m_explicit) {
    const int m = expk::default_krylov_dimension(cfg.problem, cfg.size_a);
    for (auto& s : cfg.schemes) s.M = m;
  }
  return cfg;
}

int run_sweep_command(const SweepOpts& o, const CLI::App* cmd,
                      bool with_slopes) {
  expk::RunConfig cfg = assemble(o, cmd);
  const expk::SweepResult result =
      with_slopes ? expk::converge_study(cfg) : expk::workprec_study(cfg);

  std::ostream& summary = cfg.out.empty() ? std::cerr : std::cout;
  if (cfg.out.empty())
    expk::write_csv(std::cout, result.records);
  else
    summary << "wrote " << result.records.size() << " records to " << cfg.out
            << "\n";
  if (with_slopes) {
    for (const auto& [id, slope] : result.slopes)
      summary << "scheme " << id << ": observed order " << slope << " over "
              << cfg.h_list.size() << " stepsizes\n";
  }
  return kExitOk;
}

int run_verify(const std::string& suite, int trials, unsigned seed,
               bool inject_fault) {
  expk::ExpKTableau t = expk::expk4_tableau();
  if (inject_fault) t.b[0] = expk::rat(1, 5);

  std::vector<expk::CheckResult> results;
  if (suite == "all") {
    results = expk::run_verification(t, trials, seed);
  } else if (suite == "tableau") {
    results = expk::check_tableau_conditions(t);
  } else if (suite == "bseries") {
    std::cout << expk::format_variant_table();
    results = expk::check_variant_table();
    for (auto& c : expk::check_order_classification())
      results.push_back(std::move(c));
  } else if (suite == "lemmas") {
    results = expk::check_lemma_suites(trials, seed);
  } else {
    throw expk::config_error(
        "verify: unknown suite '" + suite +
        "' (all, tableau, bseries, lemmas)");
  }

  const expk::CheckResult* first_fail = nullptr;
  for (const auto& c : results) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail
              << "\n";
    if (!c.pass && !first_fail) first_fail = &c;
  }
  if (first_fail) {
    std::cout << "verification FAILED at: " << first_fail->name << "\n";
    return kExitVerifyFail;
  }
  std::cout << "all " << results.size() << " checks passed\n";
  return kExitOk;
}

int run_bseries(const std::string& out) {
  const auto& trees = expk::tw_catalog();
  const expk::BSeries exact = expk::exact_solution_bseries();
  expk::SchemeSpec spec;
  const expk::BSeries cols[4] = {
      expk::scheme_bseries(expk::parse_scheme_id("exp4k")),
      expk::scheme_bseries(expk::parse_scheme_id("exp4sp")),
      expk::scheme_bseries(expk::parse_scheme_id("erow4k")),
      expk::scheme_bseries(expk::parse_scheme_id("erow4sp")),
  };
  std::ostringstream os;
  os << "tree,order,symmetry,exact,exp4k,exp4sp,erow4k,erow4sp\n";
  for (int row = 0; row < 21; ++row) {
    os << (row + 1) << ',' << trees[row].order << ',' << trees[row].symmetry
       << ',' << expk::format_rational(exact.coeff[row]);
    for (const auto& col : cols)
      os << ',' << expk::format_rational(col.coeff[row]);
    os << '\n';
  }
  if (out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw expk::config_error("bseries: cannot open '" + out + "'");
    f << os.str();
  }
  return kExitOk;
}

int run_tableau(bool check) {
  const expk::ExpKTableau t = expk::expk4_tableau();
  std::cout << expk::serialize_tableau(t);
  if (!check) return kExitOk;
  std::cout << "\n# order conditions\n";
  bool all_pass = true;
  for (const auto& r : expk::check_expk_order4(t).residuals) {
    std::cout << "# " << r.label << " (order " << r.order
              << "): lhs = " << expk::format_rational(r.lhs)
              << ", rhs = " << expk::format_rational(r.rhs) << ", residual = "
              << expk::format_rational(r.residual) << "\n";
    all_pass = all_pass && r.residual == 0;
  }
  return all_pass ? kExitOk : kExitVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Krylov-projected exponential integrator workbench"};
  app.require_subcommand(1);

  SweepOpts conv_opts;
  CLI::App* conv = app.add_subcommand(
      "converge", "Convergence study with observed-order summary");
  add_sweep_flags(conv, conv_opts);

  SweepOpts wp_opts;
  CLI::App* wp = app.add_subcommand(
      "workprec", "Work-precision sweep keyed for (wall_s, error) plots");
  add_sweep_flags(wp, wp_opts);

  std::string suite = "all";
  int trials = 100;
  unsigned long verify_seed = 2026;
  bool inject_fault = false;
  CLI::App* verify = app.add_subcommand(
      "verify", "Exact coefficient checks and randomized property suites");
  verify->add_option("--suite", suite, "all, tableau, bseries, lemmas");
  verify->add_option("--trials", trials, "Randomized instances per suite");
  verify->add_option("--seed", verify_seed, "Seed for the property suites");
  verify
      ->add_flag("--inject-tableau-fault", inject_fault,
                 "Test hook: perturb one weight to prove fault detection")
      ->group("");  // hidden

  std::string bs_out;
  CLI::App* bs = app.add_subcommand(
      "bseries", "Emit the per-tree coefficient table as CSV");
  bs->add_option("--out", bs_out, "CSV output path (default: stdout)");

  bool tab_check = true;
  CLI::App* tab = app.add_subcommand(
      "tableau", "Print the shipped tableau in key=value form");
  tab->add_flag("!--no-check", tab_check, "Skip the order-condition report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (conv->parsed()) return run_sweep_command(conv_opts, conv, true);
    if (wp->parsed()) return run_sweep_command(wp_opts, wp, false);
    if (verify->parsed())
      return run_verify(suite, trials,
                        static_cast<unsigned>(verify_seed), inject_fault);
    if (bs->parsed()) return run_bseries(bs_out);
    if (tab->parsed()) return run_tableau(tab_check);
    std::cerr << "no subcommand given\n";
    return kExitUsage;
  } catch (const expk::instability_error& e) {
    std::cerr << "instability: " << e.what() << "\n";
    return kExitUnstable;
  } catch (const expk::convergence_error& e) {
    std::cerr << "instability: " << e.what() << "\n";
    return kExitUnstable;
  } catch (const expk::config_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const expk::scheme_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const expk::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnstable;
  }
}
