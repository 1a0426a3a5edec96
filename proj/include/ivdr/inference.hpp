#pragma once

#include <Eigen/Dense>
#include <functional>

#include "ivdr/estimators.hpp"

namespace ivdr {

double normal_quantile(double p);

struct InfluenceMatrix {
  Eigen::MatrixXd rows;  // n x 2, per-observation influence for (psi_c, psi_v)
  Method method = Method::IvG;

  Eigen::Matrix2d covariance() const;  // sample covariance of rows / n
};

// Influence function at the estimating-equation solution, with
// M = empirical mean of A K (1,V)(1,V)^T and residual Y - m_y - A m(W;psi).
InfluenceMatrix iv_g_influence(const Dataset& ds, const NuisanceFits& nu,
                               const Eigen::Vector2d& psi_hat,
                               const Eigen::VectorXd& beta_hat);

// EIF of the fluctuated-and-projected estimator: outcome-residual and
// exposure-residual terms plus D_W. The residual terms carry the exact
// linearization factor (mean c h^T)(mean K A h h^T)^-1, which is the identity
// when zeta^2 equals Var_g(m_a|W); with the floored m_a(1,W)^2 g(1-g) form the
// factor keeps the variance consistent with the estimator actually computed.
InfluenceMatrix tmle_eif(const Dataset& ds, const NuisanceFits& nu,
                         const Eigen::VectorXd& m_star, const Eigen::Vector2d& psi_star);

// Row-level evaluators with hat quantities taken from a training sample;
// these back the cross-validated variance, where all fitted objects come
// from the fold complement.
Eigen::MatrixXd iv_g_influence_rows(const Dataset& eval, const NuisanceFits& nu,
                                    const Eigen::Vector2d& psi, const Eigen::VectorXd& beta,
                                    const Dataset& train);
Eigen::MatrixXd tmle_eif_rows(const Dataset& eval, const NuisanceFits& nu,
                              const Eigen::Vector2d& epsilon, const Eigen::Vector2d& psi,
                              const Dataset& train);

// 10-fold cross-validated (E)IF variance: the closure evaluates per-row
// influence values on the validation rows given nuisances fitted on the
// complement. Returns the variance of the estimate (mean outer product / n).
using IfClosure = std::function<Eigen::MatrixXd(const std::vector<int>& train_idx,
                                                const std::vector<int>& eval_idx)>;
Eigen::Matrix2d cv_if_variance(int n, const IfClosure& evaluate, int folds,
                               std::uint64_t seed);

struct BootstrapResult {
  double se_c = 0.0, se_v = 0.0;
  Interval ci_c, ci_v;
  int failures = 0;
  int n_success = 0;
  bool unstable = false;  // more than 5% of resamples failed
};

// Nonparametric pairs bootstrap: rows resampled jointly, estimator re-run per
// resample (nuisances included), percentile interval by the nearest-rank rule.
BootstrapResult bootstrap_ci(const Dataset& ds,
                             const std::function<Eigen::Vector2d(const Dataset&)>& estimator,
                             const CiConfig& cfg);

}  // namespace ivdr
