#pragma once

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "expk/errors.hpp"
#include "expk/integrators.hpp"
#include "expk/problems.hpp"
#include "expk/scheme_spec.hpp"

namespace expk {

// One sweep point. error is the relative l2 distance to the reference
// endpoint; the counters mirror StepStats summed over the run.
struct RunRecord {
  std::string method;
  std::string variant;
  double h = 0.0;
  double error = 0.0;
  double wall_s = 0.0;
  long long f_evals = 0;
  long long jv_products = 0;
  long long arnoldi_vectors = 0;
  long long phi_evals = 0;
};

// How the reference endpoint is produced: a classical fourth-order explicit
// run at h_min/divisor, or the adaptive full-order scheme for problems too
// stiff for that ("exp4", also at h_min/divisor).
struct ReferenceSpec {
  std::string method = "rk4";
  int divisor = 100;
  double tol = 1e-12;  // adaptive tolerance when method == "exp4"
};

inline ReferenceSpec default_reference(const std::string& problem_name) {
  ReferenceSpec r;
  if (problem_name == "allen-cahn") {
    r.method = "exp4";
    r.divisor = 20;
  }
  return r;
}

// Documented default basis sizes for the fixed-dimension variants, chosen
// empirically for stability on each grid (see README for the table).
inline int default_krylov_dimension(const std::string& problem, int size_a) {
  if (problem == "lorenz96") return 5;
  if (problem == "shallow-water") {
    const int nx = size_a > 0 ? size_a : 32;
    return std::max(8, nx / 2);
  }
  if (problem == "allen-cahn") {
    const int n = size_a > 0 ? size_a : 50;
    return std::max(16, (3 * n) / 4);
  }
  throw config_error("no default basis size for problem '" + problem + "'");
}

struct RunConfig {
  std::string problem = "lorenz96";
  int size_a = 0;  // problem-specific leading size (0 = module default)
  int size_b = 0;
  std::vector<SchemeSpec> schemes;
  std::vector<double> h_list;
  std::optional<std::pair<double, double>> tspan;  // defaults to the problem
  std::string out;                                 // CSV path; "" = none
  unsigned long seed = 0;
  bool no_timing = false;
  std::string cache_dir = ".expk_cache";
  std::optional<ReferenceSpec> reference;  // defaults per problem
};

namespace detail {

// Shared key=value dialect: '#' comments, blank-trimmed keys and values,
// duplicates rejected. Same lexical rules as the tableau serialization.
inline std::vector<std::pair<std::string, std::string>> parse_kv_text(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: missing '=' in line: " + line);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw config_error("config: malformed line: " + line);
    if (seen.count(key)) throw config_error("config: duplicate key " + key);
    seen[key] = 1;
    out.emplace_back(key, val);
  }
  return out;
}

inline double parse_double_strict(const std::string& s,
                                  const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size())
      throw config_error(what + ": trailing characters in '" + s + "'");
    return v;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error(what + ": cannot parse '" + s + "'");
  }
}

inline long parse_long_strict(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size())
      throw config_error(what + ": trailing characters in '" + s + "'");
    return v;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error(what + ": cannot parse '" + s + "'");
  }
}

inline bool parse_bool_strict(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw config_error(what + ": expected true/false, got '" + s + "'");
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    const auto a = cur.find_first_not_of(" \t");
    const auto b = cur.find_last_not_of(" \t");
    parts.push_back(a == std::string::npos ? std::string()
                                           : cur.substr(a, b - a + 1));
  }
  return parts;
}

}  // namespace detail

inline std::vector<double> parse_h_list(const std::string& text) {
  std::vector<double> hs;
  for (const std::string& p : detail::split_commas(text)) {
    if (p.empty()) throw config_error("h list: empty entry");
    hs.push_back(detail::parse_double_strict(p, "h list"));
  }
  if (hs.empty()) throw config_error("h list: no entries");
  return hs;
}

inline std::vector<SchemeSpec> parse_scheme_list(const std::string& text) {
  std::vector<SchemeSpec> out;
  for (const std::string& p : detail::split_commas(text)) {
    if (p.empty()) throw config_error("method list: empty entry");
    out.push_back(parse_scheme_id(p));
  }
  return out;
}

inline std::pair<double, double> parse_tspan(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw config_error("tspan: expected 't0:t1', got '" + text + "'");
  const double a =
      detail::parse_double_strict(text.substr(0, colon), "tspan start");
  const double b =
      detail::parse_double_strict(text.substr(colon + 1), "tspan end");
  if (!(b > a)) throw config_error("tspan: end must exceed start");
  return {a, b};
}

// Applies one parsed key=value pair onto the run configuration.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& val) {
  if (key == "problem.name") {
    cfg.problem = val;
  } else if (key == "problem.size_a") {
    cfg.size_a = static_cast<int>(detail::parse_long_strict(val, key));
  } else if (key == "problem.size_b") {
    cfg.size_b = static_cast<int>(detail::parse_long_strict(val, key));
  } else if (key == "scheme.method") {
    cfg.schemes = parse_scheme_list(val);
  } else if (key == "scheme.variant") {
    const Variant v = parse_variant(val);
    for (SchemeSpec& s : cfg.schemes) s.variant = v;
  } else if (key == "scheme.M") {
    const int m = static_cast<int>(detail::parse_long_strict(val, key));
    if (m < 1) throw config_error("scheme.M must be >= 1");
    for (SchemeSpec& s : cfg.schemes) s.M = m;
  } else if (key == "scheme.tol") {
    const double tol = detail::parse_double_strict(val, key);
    if (!(tol > 0)) throw config_error("scheme.tol must be positive");
    for (SchemeSpec& s : cfg.schemes) s.adaptive.tol = tol;
  } else if (key == "scheme.m_min") {
    const int m = static_cast<int>(detail::parse_long_strict(val, key));
    for (SchemeSpec& s : cfg.schemes) s.adaptive.m_min = m;
  } else if (key == "scheme.m_max") {
    const int m = static_cast<int>(detail::parse_long_strict(val, key));
    for (SchemeSpec& s : cfg.schemes) s.adaptive.m_max = m;
  } else if (key == "run.h_list") {
    cfg.h_list = parse_h_list(val);
  } else if (key == "run.tspan") {
    cfg.tspan = parse_tspan(val);
  } else if (key == "run.out") {
    cfg.out = val;
  } else if (key == "run.seed") {
    cfg.seed = static_cast<unsigned long>(detail::parse_long_strict(val, key));
  } else if (key == "run.no_timing") {
    cfg.no_timing = detail::parse_bool_strict(val, key);
  } else if (key == "run.cache_dir") {
    cfg.cache_dir = val;
  } else if (key == "reference.method") {
    if (val != "rk4" && val != "exp4")
      throw config_error("reference.method: expected rk4 or exp4");
    if (!cfg.reference) cfg.reference = ReferenceSpec{};
    cfg.reference->method = val;
  } else if (key == "reference.divisor") {
    if (!cfg.reference) cfg.reference = ReferenceSpec{};
    cfg.reference->divisor =
        static_cast<int>(detail::parse_long_strict(val, key));
    if (cfg.reference->divisor < 1)
      throw config_error("reference.divisor must be >= 1");
  } else if (key == "reference.tol") {
    if (!cfg.reference) cfg.reference = ReferenceSpec{};
    cfg.reference->tol = detail::parse_double_strict(val, key);
  } else {
    throw config_error("config: unknown key '" + key + "'");
  }
}

inline void apply_config_text(RunConfig& cfg, const std::string& text) {
  for (const auto& [k, v] : detail::parse_kv_text(text))
    apply_config_entry(cfg, k, v);
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  apply_config_text(cfg, buf.str());
}

// h must form a strictly decreasing positive list and every entry must
// divide the time span to an integer step count.
inline void validate_h_list(const std::vector<double>& hs, double span) {
  if (hs.empty()) throw config_error("h list: no entries");
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!(hs[i] > 0)) throw config_error("h list: entries must be positive");
    if (i > 0 && !(hs[i] < hs[i - 1]))
      throw config_error("h list: must be strictly decreasing");
    const double r = span / hs[i];
    if (std::abs(r - std::llround(r)) > 1e-8 * std::max(1.0, std::abs(r)))
      throw config_error("h list: " + std::to_string(hs[i]) +
                         " does not divide the time span");
  }
}

// Classical fourth-order explicit stepper, used for reference endpoints.
inline IntegrateResult rk4_integrate(const OdeProblem& p, double h, double t0,
                                     double t1, const Vector& y0) {
  const double span = t1 - t0;
  if (span < 0.0) throw config_error("rk4: t1 must be >= t0");
  long long n = 0;
  if (span > 0.0) {
    if (!(h > 0.0)) throw config_error("rk4: h must be positive");
    const double r = span / h;
    if (std::abs(r - std::llround(r)) > 1e-8 * std::max(1.0, std::abs(r)))
      throw config_error("rk4: (t1 - t0)/h is not an integer step count");
    n = std::llround(r);
  }
  Vector y = y0;
  StepStats total;
  const auto start = std::chrono::steady_clock::now();
  for (long long i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) * h;
    try {
      const Vector k1 = p.rhs(t, y);
      const Vector k2 = p.rhs(t + 0.5 * h, y + 0.5 * h * k1);
      const Vector k3 = p.rhs(t + 0.5 * h, y + 0.5 * h * k2);
      const Vector k4 = p.rhs(t + h, y + h * k3);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      total.f_evals += 4;
    } catch (const invalid_state_error& e) {
      throw instability_error(std::string("rk4: ") + e.what(),
                              static_cast<std::size_t>(i));
    }
    if (!y.allFinite())
      throw instability_error("rk4: non-finite state",
                              static_cast<std::size_t>(i));
  }
  total.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return {std::move(y), total};
}

// 64-bit FNV-1a over a byte range.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t hash = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    hash ^= p[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

namespace detail {

inline std::uint64_t reference_cache_key(const OdeProblem& p,
                                         const ReferenceSpec& ref,
                                         double h_ref, double t0, double t1) {
  std::ostringstream os;
  os << "ref1|" << p.name << '|' << p.dim << '|' << ref.method << '|'
     << ref.divisor << '|' << std::hexfloat << ref.tol << '|' << t0 << '|'
     << t1 << '|' << h_ref;
  const std::string head = os.str();
  std::uint64_t h = fnv1a64(head.data(), head.size());
  h = fnv1a64(p.y0.data(), static_cast<std::size_t>(p.y0.size()) * sizeof(double), h);
  return h;
}

constexpr char kCacheMagic[8] = {'E', 'X', 'P', 'K', 'R', 'E', 'F', '1'};

inline std::optional<Vector> try_read_cache(const std::filesystem::path& path,
                                            Eigen::Index dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0)
    return std::nullopt;
  std::int64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n) || n != dim)
    return std::nullopt;
  Vector v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(n) * 8))
    return std::nullopt;
  std::uint64_t stored = 0;
  if (!in.read(reinterpret_cast<char*>(&stored), sizeof stored))
    return std::nullopt;
  const std::uint64_t actual =
      fnv1a64(v.data(), static_cast<std::size_t>(n) * 8);
  if (stored != actual) return std::nullopt;  // corrupted: force recompute
  return v;
}

inline void write_cache_atomic(const std::filesystem::path& path,
                               const Vector& v) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp =
      path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return;  // cache is best-effort; the result is still returned
    out.write(kCacheMagic, 8);
    const std::int64_t n = v.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(n) * 8);
    const std::uint64_t sum =
        fnv1a64(v.data(), static_cast<std::size_t>(n) * 8);
    out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      return;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) std::filesystem::remove(tmp, ec);
}

}  // namespace detail

// Reference endpoint at t1, cached on disk keyed by a content hash of the
// configuration. A corrupted or mismatched cache entry is silently
// recomputed.
inline Vector reference_solution(const OdeProblem& p, const ReferenceSpec& ref,
                                 double h_min, double t0, double t1,
                                 const std::string& cache_dir = ".expk_cache") {
  if (ref.divisor < 1) throw config_error("reference: divisor must be >= 1");
  const double h_ref = h_min / ref.divisor;
  const std::uint64_t key = detail::reference_cache_key(p, ref, h_ref, t0, t1);
  std::ostringstream name;
  name << "ref-" << std::hex << std::setw(16) << std::setfill('0') << key
       << ".bin";
  const std::filesystem::path path =
      std::filesystem::path(cache_dir) / name.str();

  if (auto cached = detail::try_read_cache(path, p.dim)) return *cached;

  Vector y;
  if (ref.method == "rk4") {
    y = rk4_integrate(p, h_ref, t0, t1, p.y0).y;
  } else if (ref.method == "exp4") {
    SchemeSpec s;
    s.family = Family::exp4;
    s.variant = Variant::standard;
    s.adaptive.tol = ref.tol;
    s.adaptive.m_max = 200;
    y = integrate(p, s, h_ref, t0, t1, p.y0).y;
  } else {
    throw config_error("reference: unknown method '" + ref.method + "'");
  }
  detail::write_cache_atomic(path, y);
  return y;
}

// Runs every scheme at every stepsize against a fixed reference endpoint.
// Sweep order (scheme-major, h inner) and all non-timing fields are
// deterministic for a given configuration.
inline std::vector<RunRecord> run_sweep(const OdeProblem& p,
                                        const std::vector<SchemeSpec>& schemes,
                                        const std::vector<double>& hs,
                                        double t0, double t1,
                                        const Vector& reference,
                                        bool no_timing) {
  const double ref_norm = std::max(reference.norm(), 1e-300);
  std::vector<RunRecord> out;
  for (const SchemeSpec& s : schemes) {
    for (double h : hs) {
      IntegrateResult r;
      try {
        r = integrate(p, s, h, t0, t1, p.y0);
      } catch (const instability_error& e) {
        throw instability_error("sweep: scheme " + s.id() + " at h = " +
                                    std::to_string(h) + ": " + e.what(),
                                e.step);
      }
      RunRecord rec;
      rec.method = s.id();
      rec.variant = variant_name(s.variant);
      rec.h = h;
      rec.error = (r.y - reference).norm() / ref_norm;
      rec.wall_s = no_timing ? 0.0 : r.stats.wall_time;
      rec.f_evals = r.stats.f_evals;
      rec.jv_products = r.stats.jv_products;
      rec.arnoldi_vectors = r.stats.arnoldi_vectors;
      rec.phi_evals = r.stats.phi_evals;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

// Least-squares slope of log(error) against log(h).
inline double observed_order(const std::vector<double>& hs,
                             const std::vector<double>& errors) {
  if (hs.size() != errors.size() || hs.size() < 2)
    throw config_error("observed order: need matching lists of >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = static_cast<int>(hs.size());
  for (int i = 0; i < n; ++i) {
    if (!(hs[i] > 0) || !(errors[i] > 0))
      throw config_error("observed order: values must be positive");
    const double x = std::log(hs[i]);
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline void write_csv(std::ostream& os, const std::vector<RunRecord>& recs) {
  os << "method,variant,h,error,wall_s,f_evals,jv_products,arnoldi_vectors,"
        "phi_evals\n";
  os << std::setprecision(17);
  for (const RunRecord& r : recs) {
    os << r.method << ',' << r.variant << ',' << r.h << ',' << r.error << ','
       << r.wall_s << ',' << r.f_evals << ',' << r.jv_products << ','
       << r.arnoldi_vectors << ',' << r.phi_evals << '\n';
  }
}

inline void write_csv_file(const std::string& path,
                           const std::vector<RunRecord>& recs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw config_error("csv: cannot open '" + path + "' for writing");
  write_csv(out, recs);
}

struct SweepResult {
  std::vector<RunRecord> records;
  // One (scheme id, slope) pair per scheme, in configuration order.
  std::vector<std::pair<std::string, double>> slopes;
  double t0 = 0.0;
  double t1 = 0.0;
};

namespace detail {

inline SweepResult run_study(const RunConfig& cfg, bool with_slopes) {
  if (cfg.schemes.empty()) throw config_error("study: no methods given");
  if (cfg.h_list.size() < 3)
    throw config_error("study: need at least 3 stepsizes");
  const OdeProblem p = make_problem(cfg.problem, cfg.size_a, cfg.size_b);
  const double t0 = cfg.tspan ? cfg.tspan->first : p.t0;
  const double t1 = cfg.tspan ? cfg.tspan->second : p.t1;
  validate_h_list(cfg.h_list, t1 - t0);

  const ReferenceSpec ref =
      cfg.reference ? *cfg.reference : default_reference(cfg.problem);
  const Vector y_ref = reference_solution(p, ref, cfg.h_list.back(), t0, t1,
                                          cfg.cache_dir);

  SweepResult result;
  result.t0 = t0;
  result.t1 = t1;
  result.records =
      run_sweep(p, cfg.schemes, cfg.h_list, t0, t1, y_ref, cfg.no_timing);
  if (with_slopes) {
    for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
      std::vector<double> errs;
      for (std::size_t i = 0; i < cfg.h_list.size(); ++i)
        errs.push_back(result.records[s * cfg.h_list.size() + i].error);
      result.slopes.emplace_back(cfg.schemes[s].id(),
                                 observed_order(cfg.h_list, errs));
    }
  }
  if (!cfg.out.empty()) write_csv_file(cfg.out, result.records);
  return result;
}

}  // namespace detail

// Convergence study: sweep, CSV, and observed-order summary per scheme.
inline SweepResult converge_study(const RunConfig& cfg) {
  return detail::run_study(cfg, true);
}

// Work-precision study: the same sweep keyed for (wall_s, error) plots.
inline SweepResult workprec_study(const RunConfig& cfg) {
  return detail::run_study(cfg, false);
}

}  // namespace expk
