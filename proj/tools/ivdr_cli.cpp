// Batch front end: simulate Monte Carlo scenarios, estimate effects on CSV
// data, and emit plot-ready tables.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "ivdr/csv.hpp"
#include "ivdr/dataset.hpp"
#include "ivdr/errors.hpp"
#include "ivdr/estimators.hpp"
#include "ivdr/rng.hpp"
#include "ivdr/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "ivdr 0.1.0";

std::uint64_t fnv1a64(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ivdr::SpecError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a64(buf.str()));
}

int env_threads() {
  if (const char* s = std::getenv("IVDR_THREADS")) {
    const int t = std::atoi(s);
    if (t >= 1) return t;
  }
  return static_cast<int>(std::thread::hardware_concurrency());
}

// ---- flat key=value configuration ----

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ivdr::ConfigError("cannot open config '" + path + "'");
  ConfigMap kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = true;
      for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
      if (blank) continue;
      throw ivdr::ConfigError("config line is not key=value: '" + line + "'");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ivdr::ConfigError("key '" + key + "': expected boolean, got '" + v + "'");
}

ivdr::VarianceMode parse_variance(const std::string& v) {
  if (v == "default") return ivdr::VarianceMode::MethodDefault;
  if (v == "if_plugin") return ivdr::VarianceMode::IfPlugin;
  if (v == "cv_if") return ivdr::VarianceMode::CvIf;
  if (v == "bootstrap") return ivdr::VarianceMode::Bootstrap;
  throw ivdr::ConfigError("unknown variance_mode '" + v + "'");
}

std::vector<ivdr::Method> parse_methods(const std::string& v) {
  std::vector<ivdr::Method> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "all") {
      return {ivdr::Method::Tsls, ivdr::Method::IvG, ivdr::Method::IvGSl,
              ivdr::Method::Tmle, ivdr::Method::TmleSl};
    }
    out.push_back(ivdr::method_from_name(tok));
  }
  if (out.empty()) throw ivdr::ConfigError("methods: empty list");
  return out;
}

ivdr::ScenarioConfig scenario_from_config(const ConfigMap& kv) {
  ivdr::ScenarioConfig cfg;
  cfg.ci.bootstrap_B = 1999;
  cfg.threads = env_threads();
  int knn_k = 0;
  for (const auto& [key, val] : kv) {
    if (key == "n") cfg.n = std::stoi(val);
    else if (key == "reps") cfg.reps = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "misspec_a") cfg.misspec_a = parse_bool(key, val);
    else if (key == "misspec_y") cfg.misspec_y = parse_bool(key, val);
    else if (key == "misspec_m") cfg.misspec_m = parse_bool(key, val);
    else if (key == "methods") cfg.methods = parse_methods(val);
    else if (key == "variance_mode") cfg.ci.variance_mode = parse_variance(val);
    else if (key == "bootstrap_B") cfg.ci.bootstrap_B = std::stoi(val);
    else if (key == "level") cfg.ci.level = std::stod(val);
    else if (key == "threads") cfg.threads = std::stoi(val);
    else if (key == "sl_folds") cfg.libs.folds = std::stoi(val);
    else if (key == "knn_k") knn_k = std::stoi(val);
    else if (key == "tsls_variance")
      cfg.ci.tsls_variance = val == "sandwich" ? ivdr::TslsVariance::Sandwich
                                               : ivdr::TslsVariance::Classical;
    else if (key == "dgp_a_z") cfg.dgp.a_z = std::stod(val);
    else if (key == "dgp_a_v") cfg.dgp.a_v = std::stod(val);
    else if (key == "dgp_a_w") cfg.dgp.a_w = std::stod(val);
    else throw ivdr::ConfigError("unknown config key '" + key + "'");
  }
  ivdr::NuisanceLibraries libs = ivdr::NuisanceLibraries::defaults(cfg.n);
  libs.folds = cfg.libs.folds > 0 ? cfg.libs.folds : 10;
  if (knn_k > 0)
    for (auto* lib : {&libs.binary, &libs.continuous})
      for (auto& spec : *lib)
        if (spec.kind == ivdr::LearnerKind::NearestNeighbor) spec.knn_k = knn_k;
  cfg.libs = libs;
  return cfg;
}

ConfigMap resolved_config(const ivdr::ScenarioConfig& cfg) {
  ConfigMap kv;
  kv["n"] = std::to_string(cfg.n);
  kv["reps"] = std::to_string(cfg.reps);
  kv["seed"] = std::to_string(cfg.seed);
  kv["misspec_a"] = cfg.misspec_a ? "true" : "false";
  kv["misspec_y"] = cfg.misspec_y ? "true" : "false";
  kv["misspec_m"] = cfg.misspec_m ? "true" : "false";
  std::string ms;
  for (const auto& m : cfg.methods) ms += (ms.empty() ? "" : ",") + ivdr::method_name(m);
  kv["methods"] = ms;
  kv["variance_mode"] =
      cfg.ci.variance_mode == ivdr::VarianceMode::MethodDefault ? "default"
      : cfg.ci.variance_mode == ivdr::VarianceMode::IfPlugin    ? "if_plugin"
      : cfg.ci.variance_mode == ivdr::VarianceMode::CvIf        ? "cv_if"
                                                                : "bootstrap";
  kv["bootstrap_B"] = std::to_string(cfg.ci.bootstrap_B);
  kv["level"] = ivdr::csv::format_value(cfg.ci.level);
  kv["sl_folds"] = std::to_string(cfg.libs.folds);
  kv["tsls_variance"] =
      cfg.ci.tsls_variance == ivdr::TslsVariance::Sandwich ? "sandwich" : "classical";
  kv["dgp_a_z"] = ivdr::csv::format_value(cfg.dgp.a_z);
  kv["dgp_a_v"] = ivdr::csv::format_value(cfg.dgp.a_v);
  kv["dgp_a_w"] = ivdr::csv::format_value(cfg.dgp.a_w);
  return kv;
}

// ---- manifest ----

struct Manifest {
  std::string command;
  ConfigMap config;
  std::map<std::string, std::string> inputs;  // path -> digest
  std::uint64_t master_seed = 0;
  double wall_clock_seconds = 0.0;

  std::string digest() const {
    std::string blob = command + "\n";
    for (const auto& [k, v] : config) blob += k + "=" + v + "\n";
    for (const auto& [k, v] : inputs) blob += k + ":" + v + "\n";
    return hex64(fnv1a64(blob));
  }

  void write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    j["versions"] = {{"ivdr", kVersion}};
    j["master_seed"] = master_seed;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["digest"] = digest();
    std::ofstream out(path);
    out << j.dump(2) << "\n";
  }
};

void write_table(const std::string& path, const std::string& manifest_digest,
                 const std::vector<std::string>& columns,
                 const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ivdr::SpecError("cannot write '" + path + "'");
  out << "# manifest " << manifest_digest << "\n";
  for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
    out << "\n";
  }
}

std::string fmt(double v) { return ivdr::csv::format_value(v); }

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n') c = ';';
  return s;
}

// ---- simulate ----

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 const std::vector<std::string>& overrides) {
  ivdr::ScenarioConfig cfg;
  ConfigMap kv;
  try {
    kv = parse_config_file(config_path);
    for (const auto& ov : overrides) {
      const auto eq = ov.find('=');
      if (eq == std::string::npos)
        throw ivdr::ConfigError("override is not key=value: '" + ov + "'");
      kv[ov.substr(0, eq)] = ov.substr(eq + 1);
    }
    cfg = scenario_from_config(kv);
  } catch (const ivdr::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = ivdr::run_scenario(cfg);
  const auto metrics = ivdr::summarize(rows, cfg.truth());

  Manifest man;
  man.command = "simulate";
  man.config = resolved_config(cfg);
  man.inputs[config_path] = digest_file(config_path);
  man.master_seed = cfg.seed;
  man.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string digest = man.digest();

  fs::create_directories(out_dir);
  std::vector<std::vector<std::string>> rep_rows;
  for (const auto& r : rows) {
    const auto& e = r.est;
    rep_rows.push_back({std::to_string(r.replicate), ivdr::method_name(r.method),
                        r.ok ? "1" : "0", sanitize(r.error), fmt(e.psi_c), fmt(e.se_c),
                        fmt(e.ci_c.lo), fmt(e.ci_c.hi), fmt(e.psi_v), fmt(e.se_v),
                        fmt(e.ci_v.lo), fmt(e.ci_v.hi),
                        std::to_string(e.diag.converged ? 1 : 0),
                        std::to_string(e.diag.weak_instrument ? 1 : 0),
                        std::to_string(e.diag.zeta_floor_count),
                        std::to_string(e.diag.mhat_floor_count), fmt(e.diag.epsilon[0]),
                        fmt(e.diag.epsilon[1]), std::to_string(e.diag.bootstrap_failures),
                        std::to_string(e.diag.bootstrap_unstable ? 1 : 0),
                        e.diag.variance});
  }
  write_table(out_dir + "/replicates.csv", digest,
              {"replicate", "method", "ok", "error", "psi_c", "se_c", "ci_c_lo", "ci_c_hi",
               "psi_v", "se_v", "ci_v_lo", "ci_v_hi", "converged", "weak_instrument",
               "zeta_floor", "mhat_floor", "eps_c", "eps_v", "boot_failures",
               "boot_unstable", "variance"},
              rep_rows);

  std::vector<std::vector<std::string>> sum_rows;
  for (const auto& m : metrics)
    sum_rows.push_back({ivdr::method_name(m.method), m.param == 0 ? "psi_c" : "psi_v",
                        fmt(m.mean_bias), fmt(m.mc_error), fmt(m.coverage), fmt(m.rmse),
                        std::to_string(m.n_success), std::to_string(m.n_fail),
                        std::to_string(m.zeta_floor_total),
                        std::to_string(m.mhat_floor_total)});
  write_table(out_dir + "/summary.csv", digest,
              {"method", "param", "mean_bias", "mc_error", "coverage", "rmse", "n_success",
               "n_fail", "zeta_floor_total", "mhat_floor_total"},
              sum_rows);
  man.write(out_dir + "/manifest.json");
  return 0;
}

// ---- estimate ----

int cmd_estimate(const std::string& data_path, const std::string& modifier,
                 const std::string& method_arg, const std::string& variance,
                 const std::string& sl, int bootstrap_B, std::uint64_t seed, double level,
                 const std::string& out_path) {
  ivdr::csv::Table table;
  std::optional<ivdr::Dataset> ds;
  try {
    table = ivdr::csv::read_file(data_path);
    ds.emplace(ivdr::validate_dataset(table, modifier));
  } catch (const ivdr::Error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  }

  std::vector<ivdr::Method> methods;
  ivdr::EstimationConfig ec;
  try {
    methods = parse_methods(method_arg);
    if (sl == "on" || sl == "off") {
      for (auto& m : methods) {
        if (sl == "on" && m == ivdr::Method::IvG) m = ivdr::Method::IvGSl;
        if (sl == "on" && m == ivdr::Method::Tmle) m = ivdr::Method::TmleSl;
        if (sl == "off" && m == ivdr::Method::IvGSl) m = ivdr::Method::IvG;
        if (sl == "off" && m == ivdr::Method::TmleSl) m = ivdr::Method::Tmle;
      }
    } else if (sl != "auto") {
      throw ivdr::ConfigError("--sl must be on, off or auto");
    }
    ec.ci.variance_mode = parse_variance(variance);
    ec.ci.bootstrap_B = bootstrap_B;
    ec.ci.level = level;
    ec.ci.threads = env_threads();
    ec.libs = ivdr::NuisanceLibraries::defaults(ds->n());
    ec.seed = seed;
    ec.ci.bootstrap_seed = ivdr::derive_seed(seed, 17);
  } catch (const ivdr::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  std::vector<std::vector<std::string>> out_rows;
  for (const auto m : methods) {
    try {
      const ivdr::EffectEstimate e = ivdr::run_method(*ds, m, ec);
      std::string diag = "variance=" + e.diag.variance;
      diag += ";converged=" + std::to_string(e.diag.converged ? 1 : 0);
      diag += ";weak_instrument=" + std::to_string(e.diag.weak_instrument ? 1 : 0);
      diag += ";zeta_floor=" + std::to_string(e.diag.zeta_floor_count);
      diag += ";mhat_floor=" + std::to_string(e.diag.mhat_floor_count);
      diag += ";eps_c=" + fmt(e.diag.epsilon[0]) + ";eps_v=" + fmt(e.diag.epsilon[1]);
      diag += ";boot_failures=" + std::to_string(e.diag.bootstrap_failures);
      out_rows.push_back({ivdr::method_name(m), fmt(e.psi_c), fmt(e.se_c), fmt(e.ci_c.lo),
                          fmt(e.ci_c.hi), fmt(e.psi_v), fmt(e.se_v), fmt(e.ci_v.lo),
                          fmt(e.ci_v.hi), diag});
    } catch (const ivdr::DegenerateDesign& e) {
      std::cerr << "DegenerateDesign: " << e.what() << "\n";
      return 3;
    } catch (const ivdr::TmleDegenerate& e) {
      std::cerr << "TmleDegenerate: " << e.what() << "\n";
      return 3;
    } catch (const ivdr::DegenerateModifier& e) {
      std::cerr << "DegenerateModifier: " << e.what() << "\n";
      return 3;
    } catch (const ivdr::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  Manifest man;
  man.command = "estimate";
  man.config = {{"data", data_path},       {"modifier", modifier},
                {"method", method_arg},    {"variance", variance},
                {"sl", sl},                {"bootstrap_B", std::to_string(bootstrap_B)},
                {"seed", std::to_string(seed)}, {"level", fmt(level)}};
  man.inputs[data_path] = digest_file(data_path);
  man.master_seed = seed;
  write_table(out_path, man.digest(),
              {"method", "psi_c", "se_c", "ci_c_lo", "ci_c_hi", "psi_v", "se_v", "ci_v_lo",
               "ci_v_hi", "diagnostics"},
              out_rows);
  man.write(out_path + ".manifest.json");
  return 0;
}

// ---- report ----

int cmd_report(const std::string& summary_path, const std::string& out_dir) {
  ivdr::csv::RawTable t;
  int c_method, c_param, c_bias, c_mc, c_cover, c_rmse;
  try {
    t = ivdr::csv::read_raw(summary_path);
    c_method = t.col_index("method");
    c_param = t.col_index("param");
    c_bias = t.col_index("mean_bias");
    c_mc = t.col_index("mc_error");
    c_cover = t.col_index("coverage");
    c_rmse = t.col_index("rmse");
    if (c_method < 0 || c_param < 0 || c_bias < 0 || c_mc < 0 || c_cover < 0 || c_rmse < 0)
      throw ivdr::SpecError("summary is missing required columns");
  } catch (const ivdr::Error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  }

  Manifest man;
  man.command = "report";
  man.inputs[summary_path] = digest_file(summary_path);
  const std::string digest = man.digest();

  fs::create_directories(out_dir);
  std::vector<std::vector<std::string>> bias, cover, rmse;
  try {
    for (const auto& r : t.rows) {
      const std::size_t um = static_cast<std::size_t>(c_method);
      const std::size_t up = static_cast<std::size_t>(c_param);
      const double b = std::stod(r[static_cast<std::size_t>(c_bias)]);
      const double mc = std::stod(r[static_cast<std::size_t>(c_mc)]);
      bias.push_back({r[um], r[up], fmt(b), fmt(b - 1.96 * mc), fmt(b + 1.96 * mc)});
      cover.push_back({r[um], r[up], r[static_cast<std::size_t>(c_cover)], "0.925", "0.975"});
      rmse.push_back({r[um], r[up], r[static_cast<std::size_t>(c_rmse)]});
    }
  } catch (const std::exception& e) {
    std::cerr << "input error: malformed summary: " << e.what() << "\n";
    return 2;
  }
  write_table(out_dir + "/bias.csv", digest,
              {"method", "param", "bias", "bias_lo", "bias_hi"}, bias);
  write_table(out_dir + "/coverage.csv", digest,
              {"method", "param", "coverage", "ref_low", "ref_high"}, cover);
  write_table(out_dir + "/rmse.csv", digest, {"method", "param", "rmse"}, rmse);
  man.write(out_dir + "/manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"doubly robust instrumental-variable estimation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  std::string config_path, out_dir = "out";
  std::vector<std::string> overrides;
  sim->add_option("--config", config_path, "key=value scenario file")->required();
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--set", overrides, "override config entries (key=value)");

  auto* est = app.add_subcommand("estimate", "estimate effects on a CSV dataset");
  std::string data_path, modifier, method = "all", variance = "default", sl = "auto";
  std::string est_out = "estimates.csv";
  int bootstrap_B = 1999;
  std::uint64_t seed = 1;
  double level = 0.95;
  est->add_option("--data", data_path, "input CSV with columns y, z, a, covariates")
      ->required();
  est->add_option("--modifier", modifier, "covariate column acting as the effect modifier")
      ->required();
  est->add_option("--method", method, "all or comma list: tsls,ivg,ivg_sl,tmle,tmle_sl");
  est->add_option("--variance", variance, "default | if_plugin | cv_if | bootstrap");
  est->add_option("--sl", sl, "on | off | auto: toggle ensemble nuisances for ivg/tmle");
  est->add_option("--bootstrap-B", bootstrap_B, "bootstrap resamples");
  est->add_option("--seed", seed, "master seed");
  est->add_option("--level", level, "confidence level");
  est->add_option("--out", est_out, "output CSV path");

  auto* rep = app.add_subcommand("report", "emit plot-data tables from a summary");
  std::string summary_path, rep_out = "report";
  rep->add_option("--summary", summary_path, "summary.csv from simulate")->required();
  rep->add_option("--out", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir, overrides);
    if (est->parsed())
      return cmd_estimate(data_path, modifier, method, variance, sl, bootstrap_B, seed,
                          level, est_out);
    if (rep->parsed()) return cmd_report(summary_path, rep_out);
  } catch (const ivdr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
