#include "ivdr/nuisance.hpp"

#include <algorithm>

#include "ivdr/rng.hpp"

namespace ivdr {

NuisanceLibraries NuisanceLibraries::defaults(int n) {
  NuisanceLibraries libs;
  const int k = std::max(20, n / 40);
  libs.binary = {
      LearnerSpec::logistic(TermExpansion::MainTerms),
      LearnerSpec::logistic(TermExpansion::MainPlusSecondOrder),
      LearnerSpec::nearest_neighbor(k, Family::Binary),
  };
  libs.continuous = {
      LearnerSpec::least_squares(Family::Continuous, TermExpansion::MainTerms),
      LearnerSpec::stepwise(Family::Continuous, TermExpansion::MainPlusSecondOrder),
      LearnerSpec::spline(3, Family::Continuous),
      LearnerSpec::nearest_neighbor(k, Family::Continuous),
  };
  return libs;
}

Eigen::MatrixXd ma_features(const Dataset& ds, std::optional<double> z_override) {
  Eigen::MatrixXd X(ds.n(), 1 + ds.n_cov());
  X.col(0) = z_override ? Eigen::VectorXd::Constant(ds.n(), *z_override) : ds.z();
  X.rightCols(ds.n_cov()) = ds.W();
  return X;
}

Eigen::MatrixXd g_features(const Dataset& ds) { return ds.W(); }

Eigen::MatrixXd mu_features(const Dataset& ds, std::optional<double> z_override) {
  Eigen::MatrixXd X(ds.n(), 2 + ds.n_cov());
  const Eigen::VectorXd z =
      z_override ? Eigen::VectorXd::Constant(ds.n(), *z_override) : ds.z();
  X.col(0) = z;
  X.middleCols(1, ds.n_cov()) = ds.W();
  X.col(1 + ds.n_cov()) = z.cwiseProduct(ds.modifier());
  return X;
}

namespace {

Eigen::VectorXd predict_model(const NuisanceFits::Model& m, const Eigen::MatrixXd& X) {
  if (std::holds_alternative<FittedLearner>(m))
    return std::get<FittedLearner>(m).predict(X);
  return std::get<SuperLearnerFit>(m).predict(X);
}

}  // namespace

Eigen::VectorXd NuisanceFits::ma(const Dataset& ds, std::optional<double> z_override) const {
  return predict_model(ma_, ma_features(ds, z_override));
}

Eigen::VectorXd NuisanceFits::g(const Dataset& ds) const {
  return predict_model(g_, g_features(ds));
}

Eigen::VectorXd NuisanceFits::mu(const Dataset& ds, std::optional<double> z_override) const {
  return predict_model(mu_, mu_features(ds, z_override));
}

NuisanceFits build_nuisance(const Dataset& ds, FitMode mode, const NuisanceLibraries& libs,
                            std::uint64_t seed) {
  if (mode == FitMode::Parametric) {
    auto ma = fit_learner(LearnerSpec::logistic(), ma_features(ds), ds.a());
    auto g = fit_learner(LearnerSpec::logistic(), g_features(ds), ds.z());
    auto mu = fit_learner(LearnerSpec::least_squares(), mu_features(ds), ds.y());
    return NuisanceFits(mode, std::move(ma), std::move(g), std::move(mu));
  }
  SuperLearnerConfig ca{libs.binary, libs.folds, derive_seed(seed, 1)};
  SuperLearnerConfig cg{libs.binary, libs.folds, derive_seed(seed, 2)};
  SuperLearnerConfig cm{libs.continuous, libs.folds, derive_seed(seed, 3)};
  auto ma = fit_super_learner(ma_features(ds), ds.a(), ca);
  auto g = fit_super_learner(g_features(ds), ds.z(), cg);
  auto mu = fit_super_learner(mu_features(ds), ds.y(), cm);
  return NuisanceFits(mode, std::move(ma), std::move(g), std::move(mu));
}

}  // namespace ivdr
