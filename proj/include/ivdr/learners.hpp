#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ivdr {

enum class LearnerKind {
  LeastSquares,
  Logistic,
  Ridge,
  Stepwise,
  SplineBasis,
  NearestNeighbor
};

enum class Family { Continuous, Binary };
enum class TermExpansion { MainTerms, MainPlusSecondOrder };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::LeastSquares;
  Family family = Family::Continuous;
  double ridge_lambda = 0.0;       // Ridge
  int spline_knots = 3;            // SplineBasis, knots per covariate
  int knn_k = 10;                  // NearestNeighbor
  TermExpansion expansion = TermExpansion::MainTerms;
  int max_iter = 100;              // Logistic IRLS
  double tol = 1e-8;

  std::string label() const;

  static LearnerSpec least_squares(Family f = Family::Continuous,
                                   TermExpansion e = TermExpansion::MainTerms) {
    return {LearnerKind::LeastSquares, f, 0.0, 3, 10, e, 100, 1e-8};
  }
  static LearnerSpec logistic(TermExpansion e = TermExpansion::MainTerms) {
    return {LearnerKind::Logistic, Family::Binary, 0.0, 3, 10, e, 100, 1e-8};
  }
  static LearnerSpec ridge(double lambda, Family f = Family::Continuous) {
    return {LearnerKind::Ridge, f, lambda, 3, 10, TermExpansion::MainTerms, 100, 1e-8};
  }
  static LearnerSpec stepwise(Family f, TermExpansion e = TermExpansion::MainPlusSecondOrder) {
    return {LearnerKind::Stepwise, f, 0.0, 3, 10, e, 100, 1e-8};
  }
  static LearnerSpec spline(int knots, Family f = Family::Continuous) {
    return {LearnerKind::SplineBasis, f, 0.0, knots, 10, TermExpansion::MainTerms, 100, 1e-8};
  }
  static LearnerSpec nearest_neighbor(int k, Family f = Family::Continuous) {
    return {LearnerKind::NearestNeighbor, f, 0.0, 3, k, TermExpansion::MainTerms, 100, 1e-8};
  }
};

// all pairwise products and squares appended to the main terms
Eigen::MatrixXd second_order_expansion(const Eigen::MatrixXd& X);

// Immutable fitted state; predict is a pure function of the stored state.
class FittedLearner {
 public:
  // columns must match the matrix the learner was fitted on (raw features for
  // fit_learner, the explicit design/candidate matrix for the low-level fits)
  Eigen::VectorXd predict(const Eigen::MatrixXd& X_new) const;

  const LearnerSpec& spec() const { return spec_; }
  bool converged() const { return converged_; }
  int n_train() const { return n_train_; }
  int input_cols() const { return input_cols_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  const std::vector<int>& selected_terms() const { return selected_; }

 private:
  friend FittedLearner fit_least_squares(const Eigen::MatrixXd&, const Eigen::VectorXd&, double);
  friend FittedLearner fit_logistic(const Eigen::MatrixXd&, const Eigen::VectorXd&, int, double);
  friend FittedLearner fit_stepwise(const Eigen::MatrixXd&, const Eigen::VectorXd&, Family);
  friend FittedLearner fit_spline_basis(const Eigen::MatrixXd&, const Eigen::VectorXd&, int);
  friend FittedLearner fit_nearest_neighbor(const Eigen::MatrixXd&, const Eigen::VectorXd&, int);
  friend FittedLearner fit_learner(const LearnerSpec&, const Eigen::MatrixXd&, const Eigen::VectorXd&);

  LearnerSpec spec_;
  bool raw_input_ = false;  // expansion + intercept applied internally
  int input_cols_ = 0;
  int n_train_ = 0;
  bool converged_ = true;
  Eigen::VectorXd coef_;
  std::vector<int> selected_;               // stepwise
  std::vector<Eigen::VectorXd> knots_;      // spline, per covariate
  Eigen::MatrixXd train_X_;                 // nearest neighbor
  Eigen::VectorXd train_y_;
};

// ---- low-level fits on explicit design matrices ----

// lambda = 0: minimum-norm least squares; lambda > 0: ridge penalizing every
// column that is not constant-one
FittedLearner fit_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double ridge_lambda = 0.0);

// IRLS; coefficients clamped at |b| <= 15 (separation guard, flagged)
FittedLearner fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           int max_iter = 100, double tol = 1e-8);

// forward-backward AIC selection over the candidate columns, intercept always
// kept; ties broken by lowest column index
FittedLearner fit_stepwise(const Eigen::MatrixXd& X_candidates, const Eigen::VectorXd& y,
                           Family family);

// additive truncated power basis, knots at empirical quantiles l/(K+1)
FittedLearner fit_spline_basis(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                               int knots_per_covariate);

// mean of y over the k nearest rows (Euclidean); ties broken by row index
FittedLearner fit_nearest_neighbor(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                                   int k);

// ---- uniform contract over raw features (used by the Super Learner) ----
FittedLearner fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X_raw,
                          const Eigen::VectorXd& y);

inline Eigen::VectorXd predict(const FittedLearner& f, const Eigen::MatrixXd& X_new) {
  return f.predict(X_new);
}

}  // namespace ivdr
