#include "ivdr/super_learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ivdr/errors.hpp"
#include "ivdr/rng.hpp"

namespace ivdr {

std::vector<int> make_folds(int n, int V, std::uint64_t seed) {
  if (V < 2) throw ConfigError("make_folds: need at least 2 folds");
  if (V > n) throw ConfigError("make_folds: more folds than rows");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % V;
  return fold;
}

Eigen::MatrixXd cv_prediction_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const SuperLearnerConfig& cfg,
                                     const std::vector<int>& folds) {
  const int n = static_cast<int>(y.size());
  const int L = static_cast<int>(cfg.library.size());
  Eigen::MatrixXd P(n, L);
  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<int> train, valid;
    for (int i = 0; i < n; ++i)
      (folds[static_cast<std::size_t>(i)] == f ? valid : train).push_back(i);
    if (valid.empty()) continue;
    Eigen::MatrixXd Xtr(static_cast<int>(train.size()), X.cols());
    Eigen::VectorXd ytr(static_cast<int>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      Xtr.row(static_cast<int>(i)) = X.row(train[i]);
      ytr[static_cast<int>(i)] = y[train[i]];
    }
    Eigen::MatrixXd Xva(static_cast<int>(valid.size()), X.cols());
    for (std::size_t i = 0; i < valid.size(); ++i) Xva.row(static_cast<int>(i)) = X.row(valid[i]);
    for (int l = 0; l < L; ++l) {
      const FittedLearner fit = fit_learner(cfg.library[static_cast<std::size_t>(l)], Xtr, ytr);
      const Eigen::VectorXd pred = fit.predict(Xva);
      for (std::size_t i = 0; i < valid.size(); ++i) P(valid[i], l) = pred[static_cast<int>(i)];
    }
  }
  return P;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Eigen::Index m = A.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  std::vector<bool> passive(static_cast<std::size_t>(m), false);
  const Eigen::MatrixXd AtA = A.transpose() * A;
  const Eigen::VectorXd Atb = A.transpose() * b;
  const double tol = 1e-10 * std::max(1.0, Atb.cwiseAbs().maxCoeff());

  auto solve_passive = [&]() -> Eigen::VectorXd {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < m; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    Eigen::MatrixXd G(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
    Eigen::VectorXd c(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) {
      c[static_cast<Eigen::Index>(a)] = Atb[idx[a]];
      for (std::size_t d = 0; d < idx.size(); ++d)
        G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(d)) = AtA(idx[a], idx[d]);
    }
    const Eigen::VectorXd s = G.completeOrthogonalDecomposition().solve(c);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(m);
    for (std::size_t a = 0; a < idx.size(); ++a) full[idx[a]] = s[static_cast<Eigen::Index>(a)];
    return full;
  };

  for (int outer = 0; outer < 3 * static_cast<int>(m) + 10; ++outer) {
    const Eigen::VectorXd w = Atb - AtA * x;
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    for (int inner = 0; inner < 3 * static_cast<int>(m) + 10; ++inner) {
      const Eigen::VectorXd s = solve_passive();
      bool all_pos = true;
      for (Eigen::Index j = 0; j < m; ++j)
        if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0) all_pos = false;
      if (all_pos) {
        x = s;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < m; ++j)
        if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0)
          alpha = std::min(alpha, x[j] / (x[j] - s[j]));
      x = x + alpha * (s - x);
      for (Eigen::Index j = 0; j < m; ++j)
        if (passive[static_cast<std::size_t>(j)] && x[j] <= 1e-14) {
          x[j] = 0.0;
          passive[static_cast<std::size_t>(j)] = false;
        }
    }
  }
  return x;
}

Eigen::VectorXd solve_simplex_weights(const Eigen::MatrixXd& P, const Eigen::VectorXd& y) {
  if (!P.allFinite()) throw SpecError("simplex weights: prediction matrix has non-finite entries");
  // NNLS on the sum-to-one-augmented system: plain NNLS followed by
  // normalization can land off the simplex optimum when member predictions
  // are scaled, which would break the CV-risk dominance invariant
  const double lam =
      1000.0 * std::max({1.0, P.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff()});
  Eigen::MatrixXd A(P.rows() + 1, P.cols());
  A.topRows(P.rows()) = P;
  A.row(P.rows()).setConstant(lam);
  Eigen::VectorXd b(y.size() + 1);
  b.head(y.size()) = y;
  b[y.size()] = lam;
  Eigen::VectorXd w = nnls(A, b);
  const double s = w.sum();
  if (s <= 0.0) {
    Eigen::Index best = 0;
    double best_risk = std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < P.cols(); ++l) {
      const double risk = (y - P.col(l)).squaredNorm();
      if (risk < best_risk) {
        best_risk = risk;
        best = l;
      }
    }
    w.setZero();
    w[best] = 1.0;
    return w;
  }
  return w / s;
}

Eigen::VectorXd SuperLearnerFit::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
  for (std::size_t l = 0; l < member_fits.size(); ++l) {
    if (weights[static_cast<Eigen::Index>(l)] == 0.0) continue;
    out += weights[static_cast<Eigen::Index>(l)] * member_fits[l].predict(X);
  }
  if (family == Family::Binary)
    for (Eigen::Index i = 0; i < out.size(); ++i)
      out[i] = std::min(0.999, std::max(0.001, out[i]));
  return out;
}

SuperLearnerFit fit_super_learner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const SuperLearnerConfig& cfg) {
  if (cfg.library.empty()) throw ConfigError("super learner: empty library");
  bool binary_target = true;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0) binary_target = false;
  bool all_binary = true;
  for (const auto& spec : cfg.library)
    if (spec.family != Family::Binary) all_binary = false;
  if (binary_target && !all_binary)
    throw ConfigError("super learner: binary target requires binary-family members");

  SuperLearnerFit fit;
  fit.family = all_binary ? Family::Binary : Family::Continuous;
  fit.fold_assignment = make_folds(static_cast<int>(y.size()), cfg.folds, cfg.seed);
  const Eigen::MatrixXd P = cv_prediction_matrix(X, y, cfg, fit.fold_assignment);
  fit.weights = solve_simplex_weights(P, y);

  const double n = static_cast<double>(y.size());
  fit.member_cv_risk.resize(P.cols());
  for (Eigen::Index l = 0; l < P.cols(); ++l)
    fit.member_cv_risk[l] = (y - P.col(l)).squaredNorm() / n;
  fit.ensemble_cv_risk = (y - P * fit.weights).squaredNorm() / n;

  for (const auto& spec : cfg.library) fit.member_fits.push_back(fit_learner(spec, X, y));
  return fit;
}

}  // namespace ivdr
