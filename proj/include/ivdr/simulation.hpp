#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ivdr/estimators.hpp"

namespace ivdr {

// Coefficients of the two-sided non-adherence RCT data-generating process.
// Defaults reproduce the reference simulation; the exposure-model entries are
// configurable so degenerate designs (constant instrument strength) can be
// produced for the weighted-average limit checks.
struct DgpCoefficients {
  double z_bern = 0.6;
  double a_z = 1.5, a_v = 0.03, a_w = 0.01;
  double a_mis_zw1 = 5.0, a_mis_u = 0.03;
  double my_c = 0.5, my_v = 0.5, my_w = 0.01;
  double m_c = 0.5, m_v = 0.5, m_mis_w = 3.0;
  double y_sd = 1.0;
};

struct TruthRecord {
  double psi_c = 0.5;
  double psi_v = 0.5;
  DgpCoefficients dgp;
};

struct ScenarioConfig {
  int n = 500;
  int reps = 200;
  std::uint64_t seed = 1;
  bool misspec_a = false, misspec_y = false, misspec_m = false;
  std::vector<Method> methods = {Method::Tsls, Method::IvG, Method::IvGSl,
                                 Method::Tmle, Method::TmleSl};
  CiConfig ci;
  NuisanceLibraries libs;  // empty => defaults(n)
  DgpCoefficients dgp;
  int threads = 0;  // 0 = hardware concurrency

  TruthRecord truth() const { return {dgp.m_c, dgp.m_v, dgp}; }
};

// covariates w1..w4 plus the modifier v; U never leaves this function
Dataset generate_dataset(const ScenarioConfig& cfg, std::uint64_t replicate_seed);

struct ReplicateRow {
  int replicate = 0;
  Method method = Method::Tsls;
  bool ok = false;
  std::string error;  // error type name when !ok
  EffectEstimate est;
};

// replicate seeds derived from the master seed; failures recorded, not fatal
std::vector<ReplicateRow> run_scenario(const ScenarioConfig& cfg);

struct MetricRow {
  Method method = Method::Tsls;
  int param = 0;  // 0 = psi_c, 1 = psi_v
  double mean_bias = 0.0;
  double mc_error = 0.0;  // SD / sqrt(reps)
  double coverage = 0.0;
  double rmse = 0.0;
  int n_success = 0;
  int n_fail = 0;
  long zeta_floor_total = 0;
  long mhat_floor_total = 0;
};

std::vector<MetricRow> summarize(const std::vector<ReplicateRow>& rows,
                                 const TruthRecord& truth);

}  // namespace ivdr
