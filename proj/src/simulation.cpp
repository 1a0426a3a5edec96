#include "ivdr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "ivdr/errors.hpp"
#include "ivdr/rng.hpp"

namespace ivdr {

Dataset generate_dataset(const ScenarioConfig& cfg, std::uint64_t replicate_seed) {
  if (cfg.n < 50) throw ConfigError("scenario: n must be at least 50");
  const int n = cfg.n;
  const DgpCoefficients& d = cfg.dgp;
  Rng rng(replicate_seed);

  Eigen::MatrixXd W(n, 5);
  Eigen::VectorXd z(n), a(n), y(n);
  for (int i = 0; i < n; ++i) {
    double sw = 0.0;
    for (int j = 0; j < 4; ++j) {
      W(i, j) = rng.normal();
      sw += W(i, j);
    }
    const double v = rng.normal();
    W(i, 4) = v;
    const double u = rng.normal();
    z[i] = rng.bernoulli(d.z_bern) ? 1.0 : 0.0;

    double lin = d.a_z * z[i] + d.a_v * v + d.a_w * sw;
    if (cfg.misspec_a) lin -= d.a_mis_zw1 * z[i] * W(i, 0) + d.a_mis_u * u;
    a[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-lin))) ? 1.0 : 0.0;

    const double my = cfg.misspec_y
                          ? std::exp(0.05 + 0.05 * v + 0.001 * sw - 0.2 * v * sw)
                          : d.my_c + d.my_v * v + d.my_w * sw;
    const double m = d.m_c + d.m_v * v + (cfg.misspec_m ? d.m_mis_w * sw : 0.0);
    y[i] = my + m * a[i] + u + d.y_sd * rng.normal();
  }
  return Dataset(std::move(W), std::move(z), std::move(a), std::move(y),
                 {"w1", "w2", "w3", "w4", "v"}, 4);
}

std::vector<ReplicateRow> run_scenario(const ScenarioConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("scenario: reps must be at least 1");
  if (cfg.methods.empty()) throw ConfigError("scenario: no methods requested");

  NuisanceLibraries libs = cfg.libs;
  if (libs.binary.empty() && libs.continuous.empty()) libs = NuisanceLibraries::defaults(cfg.n);

  const int m = static_cast<int>(cfg.methods.size());
  std::vector<ReplicateRow> rows(static_cast<std::size_t>(cfg.reps) * m);

  auto run_replicate = [&](int r) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
    for (int k = 0; k < m; ++k) {
      ReplicateRow& row = rows[static_cast<std::size_t>(r) * m + k];
      row.replicate = r;
      row.method = cfg.methods[static_cast<std::size_t>(k)];
      try {
        const Dataset ds = generate_dataset(cfg, rep_seed);
        EstimationConfig ec;
        ec.ci = cfg.ci;
        ec.ci.bootstrap_seed = derive_seed(rep_seed, 900 + static_cast<std::uint64_t>(k));
        ec.libs = libs;
        ec.seed = rep_seed;
        row.est = run_method(ds, row.method, ec);
        row.ok = true;
      } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  };

  int threads = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, cfg.reps));
  if (threads == 1) {
    for (int r = 0; r < cfg.reps; ++r) run_replicate(r);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t]() {
        for (int r = t; r < cfg.reps; r += threads) run_replicate(r);
      });
    for (auto& th : pool) th.join();
  }
  return rows;
}

std::vector<MetricRow> summarize(const std::vector<ReplicateRow>& rows,
                                 const TruthRecord& truth) {
  if (rows.empty()) throw ConfigError("summarize: empty results");
  std::vector<Method> methods;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);

  std::vector<MetricRow> out;
  const double psi_true[2] = {truth.psi_c, truth.psi_v};
  for (Method m : methods) {
    std::vector<double> est[2];
    int covered[2] = {0, 0};
    int fails = 0;
    long zeta = 0, mhat = 0;
    for (const auto& r : rows) {
      if (r.method != m) continue;
      if (!r.ok) {
        ++fails;
        continue;
      }
      est[0].push_back(r.est.psi_c);
      est[1].push_back(r.est.psi_v);
      if (r.est.ci_c.contains(psi_true[0])) ++covered[0];
      if (r.est.ci_v.contains(psi_true[1])) ++covered[1];
      zeta += r.est.diag.zeta_floor_count;
      mhat += r.est.diag.mhat_floor_count;
    }
    if (est[0].empty()) continue;  // zero successes: method absent, not zero
    for (int par = 0; par < 2; ++par) {
      MetricRow mr;
      mr.method = m;
      mr.param = par;
      const auto& e = est[par];
      const double reps = static_cast<double>(e.size());
      double mean = 0.0;
      for (double x : e) mean += x;
      mean /= reps;
      double var = 0.0, mse = 0.0;
      for (double x : e) {
        var += (x - mean) * (x - mean);
        mse += (x - psi_true[par]) * (x - psi_true[par]);
      }
      mr.mean_bias = mean - psi_true[par];
      mr.mc_error = reps > 1 ? std::sqrt(var / (reps - 1.0) / reps) : 0.0;
      mr.coverage = static_cast<double>(covered[par]) / reps;
      mr.rmse = std::sqrt(mse / reps);
      mr.n_success = static_cast<int>(e.size());
      mr.n_fail = fails;
      mr.zeta_floor_total = zeta;
      mr.mhat_floor_total = mhat;
      out.push_back(mr);
    }
  }
  return out;
}

}  // namespace ivdr
