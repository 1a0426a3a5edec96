#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "ivdr/dataset.hpp"
#include "ivdr/super_learner.hpp"

namespace ivdr {

// Per-nuisance learner libraries for ensemble mode. The binary library serves
// the exposure model m_a(Z,W) and the instrument propensity score g(W); the
// continuous library serves mu(Z,W) = E[Y|Z,W] and is restricted to members
// that preserve its linear structure in the exposure model.
struct NuisanceLibraries {
  std::vector<LearnerSpec> binary;
  std::vector<LearnerSpec> continuous;
  int folds = 10;

  static NuisanceLibraries defaults(int n);
};

// Fitted prediction functions m_a(Z,W), g(W), mu(Z,W); each a single
// parametric main-terms fit or a Super Learner, applied to the rows of any
// dataset with the same covariate layout. m_y(W) is derived downstream from
// the identification ratio, not fitted directly.
class NuisanceFits {
 public:
  using Model = std::variant<FittedLearner, SuperLearnerFit>;

  NuisanceFits(FitMode mode, Model ma, Model g, Model mu)
      : mode_(mode), ma_(std::move(ma)), g_(std::move(g)), mu_(std::move(mu)) {}

  FitMode mode() const { return mode_; }

  // z_override replaces the observed Z in the feature blocks (counterfactual
  // predictions); binary outputs arrive clipped to [0.001, 0.999]
  Eigen::VectorXd ma(const Dataset& ds, std::optional<double> z_override = std::nullopt) const;
  Eigen::VectorXd g(const Dataset& ds) const;
  Eigen::VectorXd mu(const Dataset& ds, std::optional<double> z_override = std::nullopt) const;

  const Model& ma_model() const { return ma_; }
  const Model& g_model() const { return g_; }
  const Model& mu_model() const { return mu_; }

 private:
  FitMode mode_;
  Model ma_, g_, mu_;
};

// feature layouts shared by fitting and prediction
Eigen::MatrixXd ma_features(const Dataset& ds, std::optional<double> z_override = std::nullopt);
Eigen::MatrixXd g_features(const Dataset& ds);
Eigen::MatrixXd mu_features(const Dataset& ds, std::optional<double> z_override = std::nullopt);

// Parametric mode: logistic main terms for m_a (on Z, W) and g (on W); linear
// main terms plus Z*V for mu. Ensemble mode: one Super Learner per nuisance.
NuisanceFits build_nuisance(const Dataset& ds, FitMode mode, const NuisanceLibraries& libs,
                            std::uint64_t seed);

}  // namespace ivdr
