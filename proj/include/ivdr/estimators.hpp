#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>

#include "ivdr/dataset.hpp"
#include "ivdr/nuisance.hpp"

namespace ivdr {

struct Interval {
  double lo = std::nan("");
  double hi = std::nan("");
  bool contains(double x) const { return lo <= x && x <= hi; }
};

enum class Method { Tsls, IvG, IvGSl, Tmle, TmleSl };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

enum class VarianceMode { MethodDefault, IfPlugin, CvIf, Bootstrap };
enum class TslsVariance { Classical, Sandwich };

struct CiConfig {
  double level = 0.95;
  int bootstrap_B = 1999;
  std::uint64_t bootstrap_seed = 1;
  VarianceMode variance_mode = VarianceMode::MethodDefault;
  TslsVariance tsls_variance = TslsVariance::Classical;
  int cv_folds = 10;
  int threads = 1;  // bootstrap resamples
};

struct Diagnostics {
  bool converged = true;
  bool weak_instrument = false;
  double first_stage_f = std::numeric_limits<double>::infinity();
  int zeta_floor_count = 0;
  int mhat_floor_count = 0;
  Eigen::Vector2d epsilon = Eigen::Vector2d::Zero();
  int bootstrap_failures = 0;
  bool bootstrap_unstable = false;
  std::string variance;  // which variance estimator produced the intervals
};

struct EffectEstimate {
  double psi_c = 0.0, psi_v = 0.0;
  double se_c = std::nan(""), se_v = std::nan("");
  Interval ci_c, ci_v;
  Method method = Method::Tsls;
  Diagnostics diag;
};

// ---- point-estimate cores (shared by inference and the bootstrap) ----

struct TslsCore {
  Eigen::VectorXd theta;       // [W-mains incl intercept | fitted A | fitted A*V]
  double psi_c = 0.0, psi_v = 0.0;
  Eigen::MatrixXd regressors;  // original second-stage regressors
  Eigen::MatrixXd fitted;      // with first-stage fits substituted
  double first_stage_f = 0.0;  // min instrument-block F over the two equations
  bool rank_deficient = false;
};
TslsCore tsls_core(const Dataset& ds);

struct IvgCore {
  Eigen::VectorXd beta;   // m_y main-terms coefficients
  double psi_c = 0.0, psi_v = 0.0;
  Eigen::VectorXd K;      // m_a(Z,W) - E_g[m_a|W]
  Eigen::MatrixXd x_my;
};
IvgCore iv_g_core(const Dataset& ds, const NuisanceFits& nu);

// m_hat from the identification ratio with a sign-preserving +-0.01
// denominator floor; m_y back-solved at Z = 0
struct InitialEffect {
  Eigen::VectorXd m_hat;
  Eigen::VectorXd m_y_hat;
  int floor_count = 0;
};
InitialEffect initial_m_hat(const Dataset& ds, const NuisanceFits& nu);

// h(W) = Var(V)^-1 (E[V^2]-E[V]V, V-E[V])^T zeta^-2 with
// zeta^2 = max(m_a(1,W)^2 g(1-g), 0.025)
struct CleverCovariate {
  Eigen::MatrixXd h;  // n x 2
  Eigen::MatrixXd c;  // n x 2, the unscaled direction
  Eigen::VectorXd zeta2;
  int floor_count = 0;
  double mean_v = 0.0, mean_v2 = 0.0, var_v = 0.0;
};
CleverCovariate clever_covariate(const Dataset& ds, const NuisanceFits& nu);

// 2x2 linear system from the EIF equation expanded in epsilon
Eigen::Vector2d solve_epsilon(const Dataset& ds, const NuisanceFits& nu,
                              const InitialEffect& init, const CleverCovariate& cc);

struct TmleCore {
  InitialEffect init;
  CleverCovariate clever;
  Eigen::VectorXd K;
  Eigen::Vector2d epsilon;
  Eigen::VectorXd m_star;
  double psi_c = 0.0, psi_v = 0.0;
};
TmleCore iv_tmle_core(const Dataset& ds, const NuisanceFits& nu);

// ---- estimators with their plug-in inference attached ----

EffectEstimate estimate_tsls(const Dataset& ds, const CiConfig& ci = {});
EffectEstimate estimate_iv_g(const Dataset& ds, const NuisanceFits& nu, const CiConfig& ci = {});
EffectEstimate estimate_iv_tmle(const Dataset& ds, const NuisanceFits& nu, const CiConfig& ci = {});

// Per-method defaults: TSLS analytic; parametric IV-g / TMLE percentile
// bootstrap with nuisances refit per resample; SL variants (E)IF plug-in,
// 10-fold CV variance behind the flag.
struct EstimationConfig {
  CiConfig ci;
  NuisanceLibraries libs;
  std::uint64_t seed = 1;
};
EffectEstimate run_method(const Dataset& ds, Method method, const EstimationConfig& cfg);

}  // namespace ivdr
