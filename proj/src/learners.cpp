#include "ivdr/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ivdr/errors.hpp"

namespace ivdr {

namespace {

constexpr double kClipLo = 0.001;
constexpr double kClipHi = 0.999;
constexpr double kCoefClamp = 15.0;

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void clip_binary(Eigen::VectorXd& p) {
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p[i] = std::min(kClipHi, std::max(kClipLo, p[i]));
}

bool is_ones_column(const Eigen::VectorXd& c) {
  return (c.array() == 1.0).all();
}

// type-7 empirical quantile (linear interpolation between order statistics)
double quantile7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Eigen::MatrixXd spline_design(const Eigen::MatrixXd& X,
                              const std::vector<Eigen::VectorXd>& knots) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Eigen::Index cols = 1 + p;
  for (const auto& k : knots) cols += k.size();
  Eigen::MatrixXd B(n, cols);
  B.col(0).setOnes();
  B.middleCols(1, p) = X;
  Eigen::Index c = 1 + p;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index l = 0; l < knots[static_cast<std::size_t>(j)].size(); ++l)
      B.col(c++) = (X.col(j).array() - knots[static_cast<std::size_t>(j)][l]).max(0.0);
  return B;
}

// gaussian AIC up to constants: n log(RSS/n) + 2k
double gaussian_aic(double rss, Eigen::Index n, Eigen::Index k) {
  const double d = static_cast<double>(n);
  return d * std::log(std::max(rss, 1e-300) / d) + 2.0 * static_cast<double>(k);
}

struct IrlsResult {
  Eigen::VectorXd beta;
  bool converged = false;
  double deviance = 0.0;
};

IrlsResult irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter,
                double tol) {
  const Eigen::Index n = X.rows(), p = X.cols();
  IrlsResult r;
  r.beta = Eigen::VectorXd::Zero(p);
  bool small_step = false;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta = X * r.beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = expit(eta[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
    }
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal().array() += 1e-10 * (1.0 + H.trace() / static_cast<double>(p));
    const Eigen::VectorXd step = H.ldlt().solve(X.transpose() * (y - mu));
    Eigen::VectorXd next = r.beta + step;
    for (Eigen::Index j = 0; j < p; ++j)
      next[j] = std::min(kCoefClamp, std::max(-kCoefClamp, next[j]));
    const double change = (next - r.beta).cwiseAbs().maxCoeff();
    r.beta = next;
    if (change < tol) {
      small_step = true;
      break;
    }
  }
  const bool clamped = (r.beta.cwiseAbs().maxCoeff() >= kCoefClamp - 1e-9);
  r.converged = small_step && !clamped;
  const Eigen::VectorXd eta = X * r.beta;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = expit(eta[i]);
    const double pm = std::min(1.0 - 1e-12, std::max(1e-12, mu));
    r.deviance += -2.0 * (y[i] * std::log(pm) + (1.0 - y[i]) * std::log(1.0 - pm));
  }
  return r;
}

}  // namespace

std::string LearnerSpec::label() const {
  std::string base;
  switch (kind) {
    case LearnerKind::LeastSquares: base = "least_squares"; break;
    case LearnerKind::Logistic: base = "logistic"; break;
    case LearnerKind::Ridge: base = "ridge"; break;
    case LearnerKind::Stepwise: base = "stepwise"; break;
    case LearnerKind::SplineBasis: base = "spline_basis"; break;
    case LearnerKind::NearestNeighbor: base = "nearest_neighbor"; break;
  }
  if (expansion == TermExpansion::MainPlusSecondOrder) base += "_2nd";
  return base;
}

Eigen::MatrixXd second_order_expansion(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), p = X.cols();
  const Eigen::Index extra = p + p * (p - 1) / 2;
  Eigen::MatrixXd E(n, p + extra);
  E.leftCols(p) = X;
  Eigen::Index c = p;
  for (Eigen::Index j = 0; j < p; ++j) E.col(c++) = X.col(j).cwiseProduct(X.col(j));
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j) E.col(c++) = X.col(i).cwiseProduct(X.col(j));
  return E;
}

FittedLearner fit_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double ridge_lambda) {
  if (X.rows() != y.size() || X.rows() < 1)
    throw SpecError("least squares: X rows must match y length and be >= 1");
  FittedLearner f;
  f.spec_.kind = ridge_lambda > 0.0 ? LearnerKind::Ridge : LearnerKind::LeastSquares;
  f.spec_.ridge_lambda = ridge_lambda;
  f.input_cols_ = static_cast<int>(X.cols());
  f.n_train_ = static_cast<int>(X.rows());
  if (ridge_lambda > 0.0) {
    Eigen::MatrixXd G = X.transpose() * X;
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      if (!is_ones_column(X.col(j))) G(j, j) += ridge_lambda;
    f.coef_ = G.ldlt().solve(X.transpose() * y);
    f.converged_ = true;
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    f.coef_ = cod.solve(y);
    f.converged_ = cod.rank() == X.cols();  // false records rank deficiency
  }
  return f;
}

FittedLearner fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           int max_iter, double tol) {
  if (X.rows() != y.size()) throw SpecError("logistic: X rows must match y length");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0)
      throw SpecError("logistic: y must be binary 0/1");
  const IrlsResult r = irls(X, y, max_iter, tol);
  FittedLearner f;
  f.spec_.kind = LearnerKind::Logistic;
  f.spec_.family = Family::Binary;
  f.spec_.max_iter = max_iter;
  f.spec_.tol = tol;
  f.input_cols_ = static_cast<int>(X.cols());
  f.n_train_ = static_cast<int>(X.rows());
  f.coef_ = r.beta;
  f.converged_ = r.converged;
  return f;
}

FittedLearner fit_stepwise(const Eigen::MatrixXd& X_candidates, const Eigen::VectorXd& y,
                           Family family) {
  const Eigen::Index n = y.size();
  const Eigen::Index C = X_candidates.cols();
  if (X_candidates.rows() != n) throw SpecError("stepwise: X rows must match y length");

  // full design with intercept first; candidate j lives in column j+1
  Eigen::MatrixXd Xf(n, C + 1);
  Xf.col(0).setOnes();
  if (C > 0) Xf.rightCols(C) = X_candidates;

  std::vector<bool> in_model(static_cast<std::size_t>(C), false);
  std::vector<int> current;  // candidate indices, kept sorted

  // gaussian path works off the Gram matrix; one k x k solve per move
  Eigen::MatrixXd G;
  Eigen::VectorXd cvec;
  double yty = y.squaredNorm();
  if (family == Family::Continuous) {
    G = Xf.transpose() * Xf;
    cvec = Xf.transpose() * y;
  }

  auto model_aic = [&](const std::vector<int>& sel) -> double {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(sel.size());
    if (family == Family::Continuous) {
      Eigen::MatrixXd Gs(k, k);
      Eigen::VectorXd cs(k);
      std::vector<Eigen::Index> cols;
      cols.push_back(0);
      for (int j : sel) cols.push_back(j + 1);
      for (Eigen::Index a = 0; a < k; ++a) {
        cs[a] = cvec[cols[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < k; ++b)
          Gs(a, b) = G(cols[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
      }
      const Eigen::VectorXd beta = Gs.ldlt().solve(cs);
      const double rss = std::max(yty - beta.dot(cs), 0.0);
      return gaussian_aic(rss, n, k);
    }
    Eigen::MatrixXd Xs(n, k);
    Xs.col(0).setOnes();
    for (std::size_t a = 0; a < sel.size(); ++a)
      Xs.col(static_cast<Eigen::Index>(a) + 1) = X_candidates.col(sel[a]);
    return irls(Xs, y, 50, 1e-8).deviance + 2.0 * static_cast<double>(k);
  };

  double aic = model_aic(current);
  while (true) {
    double best_aic = aic;
    int best_col = -1;
    for (int j = 0; j < static_cast<int>(C); ++j) {
      std::vector<int> trial = current;
      if (in_model[static_cast<std::size_t>(j)]) {
        trial.erase(std::find(trial.begin(), trial.end(), j));
      } else {
        trial.insert(std::upper_bound(trial.begin(), trial.end(), j), j);
      }
      const double cand = model_aic(trial);
      if (cand < best_aic - 1e-10) {
        best_aic = cand;
        best_col = j;
      }
    }
    if (best_col < 0) break;
    if (in_model[static_cast<std::size_t>(best_col)]) {
      current.erase(std::find(current.begin(), current.end(), best_col));
    } else {
      current.insert(std::upper_bound(current.begin(), current.end(), best_col), best_col);
    }
    in_model[static_cast<std::size_t>(best_col)] = !in_model[static_cast<std::size_t>(best_col)];
    aic = best_aic;
  }

  // final coefficients on [1, selected]
  Eigen::MatrixXd Xs(n, 1 + static_cast<Eigen::Index>(current.size()));
  Xs.col(0).setOnes();
  for (std::size_t a = 0; a < current.size(); ++a)
    Xs.col(static_cast<Eigen::Index>(a) + 1) = X_candidates.col(current[a]);

  FittedLearner f;
  f.spec_.kind = LearnerKind::Stepwise;
  f.spec_.family = family;
  f.input_cols_ = static_cast<int>(C);
  f.n_train_ = static_cast<int>(n);
  f.selected_ = current;
  if (family == Family::Continuous) {
    auto sub = fit_least_squares(Xs, y);
    f.coef_ = sub.coefficients();
    f.converged_ = sub.converged();
  } else {
    const IrlsResult r = irls(Xs, y, 100, 1e-8);
    f.coef_ = r.beta;
    f.converged_ = r.converged;
  }
  return f;
}

FittedLearner fit_spline_basis(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                               int knots_per_covariate) {
  if (knots_per_covariate < 1) throw SpecError("spline: need at least one knot");
  if (X_raw.rows() != y.size()) throw SpecError("spline: X rows must match y length");
  FittedLearner f;
  f.spec_.kind = LearnerKind::SplineBasis;
  f.spec_.spline_knots = knots_per_covariate;
  f.input_cols_ = static_cast<int>(X_raw.cols());
  f.n_train_ = static_cast<int>(X_raw.rows());
  for (Eigen::Index j = 0; j < X_raw.cols(); ++j) {
    std::vector<double> col(X_raw.col(j).data(), X_raw.col(j).data() + X_raw.rows());
    Eigen::VectorXd ks(knots_per_covariate);
    for (int l = 0; l < knots_per_covariate; ++l)
      ks[l] = quantile7(col, static_cast<double>(l + 1) / (knots_per_covariate + 1));
    f.knots_.push_back(std::move(ks));
  }
  const Eigen::MatrixXd B = spline_design(X_raw, f.knots_);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(B);
  f.coef_ = cod.solve(y);
  f.converged_ = true;
  return f;
}

FittedLearner fit_nearest_neighbor(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                                   int k) {
  if (k < 1 || k > X_raw.rows()) throw SpecError("nearest neighbor: need 1 <= k <= n");
  if (X_raw.rows() != y.size()) throw SpecError("nearest neighbor: X rows must match y length");
  FittedLearner f;
  f.spec_.kind = LearnerKind::NearestNeighbor;
  f.spec_.knn_k = k;
  f.input_cols_ = static_cast<int>(X_raw.cols());
  f.n_train_ = static_cast<int>(X_raw.rows());
  f.train_X_ = X_raw;
  f.train_y_ = y;
  return f;
}

FittedLearner fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X_raw,
                          const Eigen::VectorXd& y) {
  if (spec.kind == LearnerKind::Logistic && spec.family != Family::Binary)
    throw SpecError("logistic learner requires binary family");
  if (spec.family == Family::Binary)
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y[i] != 0.0 && y[i] != 1.0)
        throw SpecError("binary-family learner requires 0/1 targets");

  FittedLearner f;
  switch (spec.kind) {
    case LearnerKind::LeastSquares:
    case LearnerKind::Ridge:
    case LearnerKind::Logistic: {
      Eigen::MatrixXd E = spec.expansion == TermExpansion::MainPlusSecondOrder
                              ? second_order_expansion(X_raw)
                              : X_raw;
      Eigen::MatrixXd D(E.rows(), E.cols() + 1);
      D.col(0).setOnes();
      D.rightCols(E.cols()) = E;
      f = spec.kind == LearnerKind::Logistic
              ? fit_logistic(D, y, spec.max_iter, spec.tol)
              : fit_least_squares(D, y, spec.kind == LearnerKind::Ridge ? spec.ridge_lambda : 0.0);
      break;
    }
    case LearnerKind::Stepwise: {
      const Eigen::MatrixXd E = spec.expansion == TermExpansion::MainPlusSecondOrder
                                    ? second_order_expansion(X_raw)
                                    : X_raw;
      f = fit_stepwise(E, y, spec.family);
      break;
    }
    case LearnerKind::SplineBasis:
      f = fit_spline_basis(X_raw, y, spec.spline_knots);
      break;
    case LearnerKind::NearestNeighbor:
      f = fit_nearest_neighbor(X_raw, y, std::min<int>(spec.knn_k, static_cast<int>(y.size())));
      break;
  }
  f.spec_ = spec;
  if (spec.kind == LearnerKind::NearestNeighbor)
    f.spec_.knn_k = std::min<int>(spec.knn_k, static_cast<int>(y.size()));
  f.raw_input_ = true;
  f.input_cols_ = static_cast<int>(X_raw.cols());
  return f;
}

Eigen::VectorXd FittedLearner::predict(const Eigen::MatrixXd& X_new) const {
  if (X_new.cols() != input_cols_)
    throw SpecError("predict: expected " + std::to_string(input_cols_) + " columns, got " +
                    std::to_string(X_new.cols()));

  Eigen::VectorXd out;
  if (spec_.kind == LearnerKind::NearestNeighbor) {
    const Eigen::Index n = train_X_.rows(), m = X_new.rows();
    const int k = spec_.knn_k;
    out.resize(m);
    std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
    for (Eigen::Index q = 0; q < m; ++q) {
      for (Eigen::Index i = 0; i < n; ++i)
        dist[static_cast<std::size_t>(i)] = {
            (train_X_.row(i) - X_new.row(q)).squaredNorm(), static_cast<int>(i)};
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
      double s = 0.0;
      for (int a = 0; a < k; ++a) s += train_y_[dist[static_cast<std::size_t>(a)].second];
      out[q] = s / k;
    }
  } else {
    Eigen::MatrixXd B;
    switch (spec_.kind) {
      case LearnerKind::SplineBasis:
        B = spline_design(X_new, knots_);
        break;
      case LearnerKind::Stepwise: {
        Eigen::MatrixXd cand = (raw_input_ && spec_.expansion == TermExpansion::MainPlusSecondOrder)
                                   ? second_order_expansion(X_new)
                                   : X_new;
        B.resize(X_new.rows(), 1 + static_cast<Eigen::Index>(selected_.size()));
        B.col(0).setOnes();
        for (std::size_t a = 0; a < selected_.size(); ++a)
          B.col(static_cast<Eigen::Index>(a) + 1) = cand.col(selected_[a]);
        break;
      }
      default: {
        if (raw_input_) {
          Eigen::MatrixXd E = spec_.expansion == TermExpansion::MainPlusSecondOrder
                                  ? second_order_expansion(X_new)
                                  : X_new;
          B.resize(E.rows(), E.cols() + 1);
          B.col(0).setOnes();
          B.rightCols(E.cols()) = E;
        } else {
          B = X_new;
        }
        break;
      }
    }
    out = B * coef_;
    if (spec_.kind == LearnerKind::Logistic)
      for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = expit(out[i]);
  }

  if (spec_.family == Family::Binary) clip_binary(out);
  return out;
}

}  // namespace ivdr
