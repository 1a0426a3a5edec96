#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ivdr/learners.hpp"

namespace ivdr {

struct SuperLearnerConfig {
  std::vector<LearnerSpec> library;
  int folds = 10;
  std::uint64_t seed = 0;
};

// V-fold cross-validated convex stacking over the learner library.
struct SuperLearnerFit {
  std::vector<FittedLearner> member_fits;  // refit on the full data
  Eigen::VectorXd weights;                 // on the probability simplex
  Eigen::VectorXd member_cv_risk;          // mean squared CV error per member
  double ensemble_cv_risk = 0.0;
  std::vector<int> fold_assignment;
  Family family = Family::Continuous;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// random partition, fold sizes differ by at most one, deterministic in seed
std::vector<int> make_folds(int n, int V, std::uint64_t seed);

// entry (i, l): prediction for row i from member l trained on all other folds
Eigen::MatrixXd cv_prediction_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const SuperLearnerConfig& cfg,
                                     const std::vector<int>& folds);

// min ||A x - b||^2 subject to x >= 0 (Lawson-Hanson active set)
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

// NNLS then normalization to sum one; all-zero solutions fall back to unit
// weight on the member with the lowest CV risk
Eigen::VectorXd solve_simplex_weights(const Eigen::MatrixXd& P, const Eigen::VectorXd& y);

SuperLearnerFit fit_super_learner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const SuperLearnerConfig& cfg);

}  // namespace ivdr
