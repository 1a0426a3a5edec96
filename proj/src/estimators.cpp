#include "ivdr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ivdr/errors.hpp"
#include "ivdr/inference.hpp"
#include "ivdr/rng.hpp"

namespace ivdr {

std::string method_name(Method m) {
  switch (m) {
    case Method::Tsls: return "tsls";
    case Method::IvG: return "ivg";
    case Method::IvGSl: return "ivg_sl";
    case Method::Tmle: return "tmle";
    case Method::TmleSl: return "tmle_sl";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "tsls") return Method::Tsls;
  if (name == "ivg") return Method::IvG;
  if (name == "ivg_sl") return Method::IvGSl;
  if (name == "tmle") return Method::Tmle;
  if (name == "tmle_sl") return Method::TmleSl;
  throw ConfigError("unknown method '" + name + "'");
}

namespace {

double rss_of_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  return (y - X * cod.solve(y)).squaredNorm();
}

// nuisance predictions evaluated once per dataset
struct NuisanceValues {
  Eigen::VectorXd maz, ma1, ma0, g, mu1, mu0;
  Eigen::VectorXd K;  // m_a(Z,W) - E_g[m_a | W]
};

NuisanceValues nuisance_values(const Dataset& ds, const NuisanceFits& nu, bool with_mu) {
  NuisanceValues v;
  v.maz = nu.ma(ds);
  v.ma1 = nu.ma(ds, 1.0);
  v.ma0 = nu.ma(ds, 0.0);
  v.g = nu.g(ds);
  if (with_mu) {
    v.mu1 = nu.mu(ds, 1.0);
    v.mu0 = nu.mu(ds, 0.0);
  }
  v.K = v.maz.array() - (v.g.array() * v.ma1.array() + (1.0 - v.g.array()) * v.ma0.array());
  return v;
}

InitialEffect initial_m_hat_impl(const NuisanceValues& v) {
  InitialEffect init;
  const Eigen::Index n = v.ma1.size();
  init.m_hat.resize(n);
  init.m_y_hat.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double den = v.ma1[i] - v.ma0[i];
    if (std::abs(den) < 0.01) {
      den = den >= 0.0 ? 0.01 : -0.01;
      ++init.floor_count;
    }
    init.m_hat[i] = (v.mu1[i] - v.mu0[i]) / den;
    init.m_y_hat[i] = v.mu0[i] - init.m_hat[i] * v.ma0[i];
  }
  return init;
}

CleverCovariate clever_covariate_impl(const Dataset& ds, const NuisanceValues& v) {
  const int n = ds.n();
  const Eigen::VectorXd V = ds.modifier();
  CleverCovariate cc;
  cc.mean_v = V.mean();
  cc.mean_v2 = V.squaredNorm() / static_cast<double>(n);
  cc.var_v = cc.mean_v2 - cc.mean_v * cc.mean_v;
  if (cc.var_v <= 1e-12) throw DegenerateModifier("clever covariate: Var(V) = 0");

  cc.zeta2.resize(n);
  cc.c.resize(n, 2);
  cc.h.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const double raw = v.ma1[i] * v.ma1[i] * v.g[i] * (1.0 - v.g[i]);
    if (raw < 0.025) ++cc.floor_count;
    cc.zeta2[i] = std::max(raw, 0.025);
    cc.c(i, 0) = (cc.mean_v2 - cc.mean_v * V[i]) / cc.var_v;
    cc.c(i, 1) = (V[i] - cc.mean_v) / cc.var_v;
    cc.h.row(i) = cc.c.row(i) / cc.zeta2[i];
  }
  return cc;
}

Eigen::Vector2d solve_epsilon_impl(const Dataset& ds, const NuisanceValues& v,
                                   const InitialEffect& init, const CleverCovariate& cc) {
  const int n = ds.n();
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d h = cc.h.row(i).transpose();
    const double r0 = ds.y()[i] - ds.a()[i] * init.m_hat[i] - init.m_y_hat[i];
    b += h * (v.K[i] * r0);
    S += (v.K[i] * ds.a()[i]) * (h * h.transpose());
  }
  Eigen::FullPivLU<Eigen::Matrix2d> lu(S);
  if (!lu.isInvertible()) throw TmleDegenerate("epsilon system is singular");
  return lu.solve(b);
}

TmleCore tmle_core_impl(const Dataset& ds, const NuisanceValues& v) {
  TmleCore core;
  core.init = initial_m_hat_impl(v);
  core.clever = clever_covariate_impl(ds, v);
  core.K = v.K;
  core.epsilon = solve_epsilon_impl(ds, v, core.init, core.clever);
  core.m_star = core.init.m_hat + core.clever.h * core.epsilon;

  // project m* onto the working model (1, V) by OLS
  const Eigen::VectorXd V = ds.modifier();
  Eigen::Matrix2d P;
  P << static_cast<double>(ds.n()), V.sum(), V.sum(), V.squaredNorm();
  Eigen::Vector2d q;
  q << core.m_star.sum(), V.dot(core.m_star);
  const Eigen::Vector2d psi = P.ldlt().solve(q);
  core.psi_c = psi[0];
  core.psi_v = psi[1];
  return core;
}

}  // namespace

// ---------------------------------------------------------------- TSLS

TslsCore tsls_core(const Dataset& ds) {
  const int n = ds.n();
  const int p = ds.n_cov();
  const Eigen::VectorXd V = ds.modifier();

  Eigen::MatrixXd S(n, p + 3);  // instruments: 1, W, Z, Z*V
  S.col(0).setOnes();
  S.middleCols(1, p) = ds.W();
  S.col(p + 1) = ds.z();
  S.col(p + 2) = ds.z().cwiseProduct(V);

  TslsCore core;
  core.regressors.resize(n, p + 3);  // 1, W, A, A*V
  core.regressors.col(0).setOnes();
  core.regressors.middleCols(1, p) = ds.W();
  core.regressors.col(p + 1) = ds.a();
  core.regressors.col(p + 2) = ds.a().cwiseProduct(V);

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> codS(S);
  core.fitted = core.regressors;
  core.fitted.col(p + 1) = S * codS.solve(core.regressors.col(p + 1));
  core.fitted.col(p + 2) = S * codS.solve(core.regressors.col(p + 2));

  // instrument-block F statistic per first-stage equation (strength diagnostic)
  const Eigen::MatrixXd S0 = S.leftCols(p + 1);
  core.first_stage_f = std::numeric_limits<double>::infinity();
  const double dof = static_cast<double>(n) - static_cast<double>(codS.rank());
  for (int e = p + 1; e <= p + 2; ++e) {
    const double rss1 = (core.regressors.col(e) - core.fitted.col(e)).squaredNorm();
    const double rss0 = rss_of_fit(S0, core.regressors.col(e));
    if (rss0 - rss1 <= 0.0) {
      core.first_stage_f = 0.0;
      continue;
    }
    const double f = dof > 0.0 && rss1 > 0.0
                         ? ((rss0 - rss1) / 2.0) / (rss1 / dof)
                         : std::numeric_limits<double>::infinity();
    core.first_stage_f = std::min(core.first_stage_f, f);
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> codF(core.fitted);
  core.theta = codF.solve(ds.y());
  core.rank_deficient = codF.rank() < core.fitted.cols();
  core.psi_c = core.theta[p + 1];
  core.psi_v = core.theta[p + 2];
  return core;
}

EffectEstimate estimate_tsls(const Dataset& ds, const CiConfig& ci) {
  const TslsCore core = tsls_core(ds);
  const int n = ds.n();
  const int p = ds.n_cov();

  // generated-regressor correction: the residual uses the original regressors
  const Eigen::VectorXd u = ds.y() - core.regressors * core.theta;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(core.fitted.transpose() *
                                                              core.fitted);
  const Eigen::MatrixXd bread = cod.pseudoInverse();

  Eigen::MatrixXd cov;
  std::string variance;
  if (ci.tsls_variance == TslsVariance::Sandwich) {
    const Eigen::MatrixXd meat =
        core.fitted.transpose() * u.array().square().matrix().asDiagonal() * core.fitted;
    cov = bread * meat * bread;
    variance = "sandwich";
  } else {
    const double dof =
        std::max(1.0, static_cast<double>(n) - static_cast<double>(cod.rank()));
    cov = (u.squaredNorm() / dof) * bread;
    variance = "classical";
  }

  EffectEstimate est;
  est.method = Method::Tsls;
  est.psi_c = core.psi_c;
  est.psi_v = core.psi_v;
  est.se_c = std::sqrt(std::max(0.0, cov(p + 1, p + 1)));
  est.se_v = std::sqrt(std::max(0.0, cov(p + 2, p + 2)));
  const double zq = normal_quantile(0.5 + ci.level / 2.0);
  est.ci_c = {est.psi_c - zq * est.se_c, est.psi_c + zq * est.se_c};
  est.ci_v = {est.psi_v - zq * est.se_v, est.psi_v + zq * est.se_v};
  est.diag.first_stage_f = core.first_stage_f;
  est.diag.weak_instrument = core.rank_deficient || core.first_stage_f < 1e-6;
  est.diag.variance = variance;
  return est;
}

// ---------------------------------------------------------------- IV-g

IvgCore iv_g_core(const Dataset& ds, const NuisanceFits& nu) {
  const int n = ds.n();
  const int p = ds.n_cov();
  const Eigen::VectorXd V = ds.modifier();
  const NuisanceValues v = nuisance_values(ds, nu, false);

  IvgCore core;
  core.K = v.K;
  core.x_my.resize(n, p + 1);
  core.x_my.col(0).setOnes();
  core.x_my.rightCols(p) = ds.W();

  // stacked system: index rows [x_my | K, K*V], regressors [x_my | A, A*V]
  Eigen::MatrixXd U(n, p + 3), R(n, p + 3);
  U.leftCols(p + 1) = core.x_my;
  U.col(p + 1) = core.K;
  U.col(p + 2) = core.K.cwiseProduct(V);
  R.leftCols(p + 1) = core.x_my;
  R.col(p + 1) = ds.a();
  R.col(p + 2) = ds.a().cwiseProduct(V);

  const Eigen::MatrixXd G = U.transpose() * R;
  const Eigen::VectorXd rhs = U.transpose() * ds.y();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
  const Eigen::VectorXd theta = cod.solve(rhs);

  const double resid = (rhs - G * theta).cwiseAbs().maxCoeff();
  const double scale = 1.0 + ds.y().cwiseAbs().maxCoeff();
  if (resid > 1e-6 * static_cast<double>(n) * scale)
    throw DegenerateDesign("iv-g: singular stacked estimating system");

  core.beta = theta.head(p + 1);
  core.psi_c = theta[p + 1];
  core.psi_v = theta[p + 2];
  return core;
}

EffectEstimate estimate_iv_g(const Dataset& ds, const NuisanceFits& nu, const CiConfig& ci) {
  const IvgCore core = iv_g_core(ds, nu);
  EffectEstimate est;
  est.method = nu.mode() == FitMode::Ensemble ? Method::IvGSl : Method::IvG;
  est.psi_c = core.psi_c;
  est.psi_v = core.psi_v;

  const InfluenceMatrix infl =
      iv_g_influence(ds, nu, Eigen::Vector2d(core.psi_c, core.psi_v), core.beta);
  const Eigen::Matrix2d cov = infl.covariance();
  est.se_c = std::sqrt(std::max(0.0, cov(0, 0)));
  est.se_v = std::sqrt(std::max(0.0, cov(1, 1)));
  const double zq = normal_quantile(0.5 + ci.level / 2.0);
  est.ci_c = {est.psi_c - zq * est.se_c, est.psi_c + zq * est.se_c};
  est.ci_v = {est.psi_v - zq * est.se_v, est.psi_v + zq * est.se_v};
  est.diag.variance = "if_plugin";
  return est;
}

// ---------------------------------------------------------------- IV-TMLE

InitialEffect initial_m_hat(const Dataset& ds, const NuisanceFits& nu) {
  return initial_m_hat_impl(nuisance_values(ds, nu, true));
}

CleverCovariate clever_covariate(const Dataset& ds, const NuisanceFits& nu) {
  return clever_covariate_impl(ds, nuisance_values(ds, nu, false));
}

Eigen::Vector2d solve_epsilon(const Dataset& ds, const NuisanceFits& nu,
                              const InitialEffect& init, const CleverCovariate& cc) {
  return solve_epsilon_impl(ds, nuisance_values(ds, nu, false), init, cc);
}

TmleCore iv_tmle_core(const Dataset& ds, const NuisanceFits& nu) {
  return tmle_core_impl(ds, nuisance_values(ds, nu, true));
}

EffectEstimate estimate_iv_tmle(const Dataset& ds, const NuisanceFits& nu,
                                const CiConfig& ci) {
  const TmleCore core = iv_tmle_core(ds, nu);
  EffectEstimate est;
  est.method = nu.mode() == FitMode::Ensemble ? Method::TmleSl : Method::Tmle;
  est.psi_c = core.psi_c;
  est.psi_v = core.psi_v;
  est.diag.epsilon = core.epsilon;
  est.diag.zeta_floor_count = core.clever.floor_count;
  est.diag.mhat_floor_count = core.init.floor_count;

  const InfluenceMatrix infl =
      tmle_eif(ds, nu, core.m_star, Eigen::Vector2d(core.psi_c, core.psi_v));
  const Eigen::Matrix2d cov = infl.covariance();
  est.se_c = std::sqrt(std::max(0.0, cov(0, 0)));
  est.se_v = std::sqrt(std::max(0.0, cov(1, 1)));
  const double zq = normal_quantile(0.5 + ci.level / 2.0);
  est.ci_c = {est.psi_c - zq * est.se_c, est.psi_c + zq * est.se_c};
  est.ci_v = {est.psi_v - zq * est.se_v, est.psi_v + zq * est.se_v};
  est.diag.variance = "if_plugin";
  return est;
}

// ---------------------------------------------------------------- dispatch

namespace {

bool is_sl(Method m) { return m == Method::IvGSl || m == Method::TmleSl; }

std::uint64_t nuisance_tag(Method m) {
  return (m == Method::IvG || m == Method::IvGSl) ? 7001 : 7002;
}

Eigen::Vector2d point_estimate(const Dataset& ds, Method method,
                               const EstimationConfig& cfg) {
  if (method == Method::Tsls) {
    const TslsCore c = tsls_core(ds);
    return {c.psi_c, c.psi_v};
  }
  const NuisanceFits nu =
      build_nuisance(ds, is_sl(method) ? FitMode::Ensemble : FitMode::Parametric,
                     cfg.libs, derive_seed(cfg.seed, nuisance_tag(method)));
  if (method == Method::IvG || method == Method::IvGSl) {
    const IvgCore c = iv_g_core(ds, nu);
    return {c.psi_c, c.psi_v};
  }
  const TmleCore c = iv_tmle_core(ds, nu);
  return {c.psi_c, c.psi_v};
}

void attach_bootstrap(EffectEstimate& est, const Dataset& ds, Method method,
                      const EstimationConfig& cfg) {
  auto closure = [method, &cfg](const Dataset& d) { return point_estimate(d, method, cfg); };
  const BootstrapResult boot = bootstrap_ci(ds, closure, cfg.ci);
  est.se_c = boot.se_c;
  est.se_v = boot.se_v;
  est.ci_c = boot.ci_c;
  est.ci_v = boot.ci_v;
  est.diag.bootstrap_failures = boot.failures;
  est.diag.bootstrap_unstable = boot.unstable;
  est.diag.variance = "bootstrap";
}

// Cross-validated IF variance: all hat quantities (nuisances, m_y
// coefficients, fluctuation, V-moments) come from the training complement;
// the IF is evaluated on the validation rows at the full-data estimate.
Eigen::Matrix2d cv_variance_for(const Dataset& ds, Method method,
                                const EstimationConfig& cfg, const EffectEstimate& full) {
  const FitMode mode = is_sl(method) ? FitMode::Ensemble : FitMode::Parametric;
  const Eigen::Vector2d psi(full.psi_c, full.psi_v);

  IfClosure closure;
  if (method == Method::IvG || method == Method::IvGSl) {
    closure = [&ds, &cfg, mode, psi](const std::vector<int>& train_idx,
                                     const std::vector<int>& eval_idx) {
      const Dataset train = ds.subset(train_idx);
      const NuisanceFits nu =
          build_nuisance(train, mode, cfg.libs, derive_seed(cfg.seed, 8101));
      const IvgCore tc = iv_g_core(train, nu);
      return iv_g_influence_rows(ds.subset(eval_idx), nu, psi, tc.beta, train);
    };
  } else if (method == Method::Tmle || method == Method::TmleSl) {
    closure = [&ds, &cfg, mode, psi](const std::vector<int>& train_idx,
                                     const std::vector<int>& eval_idx) {
      const Dataset train = ds.subset(train_idx);
      const NuisanceFits nu =
          build_nuisance(train, mode, cfg.libs, derive_seed(cfg.seed, 8102));
      const TmleCore tc = iv_tmle_core(train, nu);
      return tmle_eif_rows(ds.subset(eval_idx), nu, tc.epsilon, psi, train);
    };
  } else {
    throw ConfigError("cv_if variance is only defined for the IF-based methods");
  }
  return cv_if_variance(ds.n(), closure, cfg.ci.cv_folds, derive_seed(cfg.seed, 8100));
}

}  // namespace

EffectEstimate run_method(const Dataset& ds, Method method, const EstimationConfig& cfg) {
  VarianceMode mode = cfg.ci.variance_mode;
  if (mode == VarianceMode::MethodDefault)
    mode = (method == Method::Tsls || is_sl(method)) ? VarianceMode::IfPlugin
                                                     : VarianceMode::Bootstrap;

  EffectEstimate est;
  if (method == Method::Tsls) {
    if (mode == VarianceMode::CvIf)
      throw ConfigError("cv_if variance is only defined for the IF-based methods");
    est = estimate_tsls(ds, cfg.ci);
  } else {
    const NuisanceFits nu =
        build_nuisance(ds, is_sl(method) ? FitMode::Ensemble : FitMode::Parametric,
                       cfg.libs, derive_seed(cfg.seed, nuisance_tag(method)));
    est = (method == Method::IvG || method == Method::IvGSl)
              ? estimate_iv_g(ds, nu, cfg.ci)
              : estimate_iv_tmle(ds, nu, cfg.ci);
    est.method = method;

    if (mode == VarianceMode::CvIf) {
      const Eigen::Matrix2d cov = cv_variance_for(ds, method, cfg, est);
      est.se_c = std::sqrt(std::max(0.0, cov(0, 0)));
      est.se_v = std::sqrt(std::max(0.0, cov(1, 1)));
      const double zq = normal_quantile(0.5 + cfg.ci.level / 2.0);
      est.ci_c = {est.psi_c - zq * est.se_c, est.psi_c + zq * est.se_c};
      est.ci_v = {est.psi_v - zq * est.se_v, est.psi_v + zq * est.se_v};
      est.diag.variance = "cv_if";
    }
  }
  if (mode == VarianceMode::Bootstrap) attach_bootstrap(est, ds, method, cfg);
  return est;
}

}  // namespace ivdr
