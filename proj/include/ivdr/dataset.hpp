#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ivdr/csv.hpp"

namespace ivdr {

struct Observation {
  Eigen::VectorXd w;
  double z = 0.0;
  double a = 0.0;
  double y = 0.0;
};

// Immutable observed-data table O_i = {W_i, Z_i, A_i, Y_i} with one designated
// effect modifier column V inside W. Construction validates; afterwards the
// object is safe for concurrent shared reads.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd W, Eigen::VectorXd z, Eigen::VectorXd a, Eigen::VectorXd y,
          std::vector<std::string> covariate_names, int modifier_index);

  int n() const { return static_cast<int>(y_.size()); }
  int n_cov() const { return static_cast<int>(W_.cols()); }
  const Eigen::MatrixXd& W() const { return W_; }
  const Eigen::VectorXd& z() const { return z_; }
  const Eigen::VectorXd& a() const { return a_; }
  const Eigen::VectorXd& y() const { return y_; }
  const std::vector<std::string>& covariate_names() const { return names_; }
  int modifier_index() const { return modifier_; }
  Eigen::VectorXd modifier() const { return W_.col(modifier_); }

  Observation row(int i) const;

  // row resample (bootstrap) / row subset (cross validation folds)
  Dataset subset(const std::vector<int>& idx) const;

 private:
  Eigen::MatrixXd W_;
  Eigen::VectorXd z_, a_, y_;
  std::vector<std::string> names_;
  int modifier_;
};

// CSV contract: required columns y, z, a; every remaining column is a
// covariate; z and a must parse to exactly 0 or 1; no NaN cells.
Dataset validate_dataset(const csv::Table& raw, const std::string& modifier_name);

enum class TermKind { Intercept, Covariate, Z, ZCovariate };

struct Term {
  TermKind kind = TermKind::Intercept;
  int col = -1;  // covariate index for Covariate / ZCovariate

  static Term intercept() { return {TermKind::Intercept, -1}; }
  static Term covariate(int j) { return {TermKind::Covariate, j}; }
  static Term z() { return {TermKind::Z, -1}; }
  static Term z_covariate(int j) { return {TermKind::ZCovariate, j}; }
};

enum class ModelRole { OutcomeMy, ExposureMa, InstrumentG, OutcomeMu, EffectM };
enum class FitMode { Parametric, Ensemble };

struct ModelSpec {
  ModelRole role = ModelRole::OutcomeMy;
  std::vector<Term> terms;
  FitMode fit_mode = FitMode::Parametric;
};

// Standard specifications used throughout: main terms of W, optionally Z and
// the Z*V product.
ModelSpec main_terms_spec(const Dataset& ds, ModelRole role, bool with_z,
                          bool with_z_modifier);

// One column per term, rows in dataset order. z_override replaces the
// observed Z in every Z-involving term (counterfactual designs).
Eigen::MatrixXd design_matrix(const Dataset& ds, const ModelSpec& spec,
                              std::optional<double> z_override = std::nullopt);

}  // namespace ivdr
