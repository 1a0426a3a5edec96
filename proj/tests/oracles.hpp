// Test-only oracles, independent of the library implementation paths they
// check: explicit normal-equation solves, naive grid searches, exhaustive
// subset selection, brute-force neighbors.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "ivdr/rng.hpp"

namespace oracle {

// least squares through explicit normal equations with a hand-rolled 3x3
// inverse (adjugate), for small full-rank problems only
inline Eigen::Vector3d normal_equations_3(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::Matrix3d G = X.transpose() * X;
  const Eigen::Vector3d b = X.transpose() * y;
  Eigen::Matrix3d adj;
  adj(0, 0) = G(1, 1) * G(2, 2) - G(1, 2) * G(2, 1);
  adj(0, 1) = -(G(0, 1) * G(2, 2) - G(0, 2) * G(2, 1));
  adj(0, 2) = G(0, 1) * G(1, 2) - G(0, 2) * G(1, 1);
  adj(1, 0) = -(G(1, 0) * G(2, 2) - G(1, 2) * G(2, 0));
  adj(1, 1) = G(0, 0) * G(2, 2) - G(0, 2) * G(2, 0);
  adj(1, 2) = -(G(0, 0) * G(1, 2) - G(0, 2) * G(1, 0));
  adj(2, 0) = G(1, 0) * G(2, 1) - G(1, 1) * G(2, 0);
  adj(2, 1) = -(G(0, 0) * G(2, 1) - G(0, 1) * G(2, 0));
  adj(2, 2) = G(0, 0) * G(1, 1) - G(0, 1) * G(1, 0);
  const double det = G(0, 0) * adj(0, 0) + G(0, 1) * adj(1, 0) + G(0, 2) * adj(2, 0);
  return (adj / det) * b;
}

// naive gradient ascent on the binomial log-likelihood
inline Eigen::VectorXd logistic_gradient_ascent(const Eigen::MatrixXd& X,
                                                const Eigen::VectorXd& y,
                                                double step = 0.5, int iters = 200000,
                                                double tol = 1e-12) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  const double n = static_cast<double>(X.rows());
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd p = (X * beta).unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    const Eigen::VectorXd grad = X.transpose() * (y - p) / n;
    beta += step * grad;
    if (grad.cwiseAbs().maxCoeff() < tol) break;
  }
  return beta;
}

// exhaustive best-subset AIC over candidate columns (gaussian family)
inline std::vector<int> exhaustive_aic_gaussian(const Eigen::MatrixXd& C,
                                                const Eigen::VectorXd& y) {
  const int p = static_cast<int>(C.cols());
  const int n = static_cast<int>(y.size());
  double best_aic = std::numeric_limits<double>::infinity();
  std::vector<int> best;
  for (int mask = 0; mask < (1 << p); ++mask) {
    std::vector<int> sel;
    for (int j = 0; j < p; ++j)
      if (mask & (1 << j)) sel.push_back(j);
    Eigen::MatrixXd X(n, 1 + static_cast<int>(sel.size()));
    X.col(0).setOnes();
    for (std::size_t a = 0; a < sel.size(); ++a) X.col(static_cast<int>(a) + 1) = C.col(sel[a]);
    const Eigen::VectorXd beta = X.completeOrthogonalDecomposition().solve(y);
    const double rss = std::max((y - X * beta).squaredNorm(), 1e-300);
    const double aic = n * std::log(rss / n) + 2.0 * (1.0 + static_cast<double>(sel.size()));
    if (aic < best_aic - 1e-12) {
      best_aic = aic;
      best = sel;
    }
  }
  return best;
}

// brute-force k nearest neighbors, ties by row index
inline double knn_predict(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::RowVectorXd& q, int k) {
  std::vector<std::pair<double, int>> d;
  for (int i = 0; i < X.rows(); ++i) d.push_back({(X.row(i) - q).squaredNorm(), i});
  std::sort(d.begin(), d.end());
  double s = 0.0;
  for (int a = 0; a < k; ++a) s += y[d[static_cast<std::size_t>(a)].second];
  return s / k;
}

// iteratively refined grid minimization over a rectangle in R^2
inline Eigen::Vector2d grid_minimize_2d(const std::function<double(double, double)>& f,
                                        double lo0, double hi0, double lo1, double hi1,
                                        int points = 81, int zooms = 12) {
  double best0 = 0.5 * (lo0 + hi0), best1 = 0.5 * (lo1 + hi1);
  for (int z = 0; z < zooms; ++z) {
    double best = std::numeric_limits<double>::infinity();
    const double s0 = (hi0 - lo0) / (points - 1), s1 = (hi1 - lo1) / (points - 1);
    for (int i = 0; i < points; ++i)
      for (int j = 0; j < points; ++j) {
        const double a = lo0 + s0 * i, b = lo1 + s1 * j;
        const double v = f(a, b);
        if (v < best) {
          best = v;
          best0 = a;
          best1 = b;
        }
      }
    const double w0 = (hi0 - lo0) / 4.0, w1 = (hi1 - lo1) / 4.0;
    lo0 = best0 - w0;
    hi0 = best0 + w0;
    lo1 = best1 - w1;
    hi1 = best1 + w1;
  }
  return {best0, best1};
}

// fixed-step grid over the L-1 simplex (weights summing to one)
inline Eigen::VectorXd simplex_grid_minimize(const Eigen::MatrixXd& P, const Eigen::VectorXd& y,
                                             double step = 0.001) {
  const int L = static_cast<int>(P.cols());
  const int steps = static_cast<int>(std::round(1.0 / step));
  const double n = static_cast<double>(y.size());
  Eigen::VectorXd best = Eigen::VectorXd::Zero(L);
  best[0] = 1.0;
  double best_obj = std::numeric_limits<double>::infinity();
  if (L == 1) return best;
  if (L == 2) {
    for (int i = 0; i <= steps; ++i) {
      const double w0 = i * step;
      const double obj = (y - P.col(0) * w0 - P.col(1) * (1.0 - w0)).squaredNorm() / n;
      if (obj < best_obj) {
        best_obj = obj;
        best << w0, 1.0 - w0;
      }
    }
    return best;
  }
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps - i; ++j) {
      const double w0 = i * step, w1 = j * step, w2 = 1.0 - w0 - w1;
      const double obj =
          (y - P.col(0) * w0 - P.col(1) * w1 - P.col(2) * w2).squaredNorm() / n;
      if (obj < best_obj) {
        best_obj = obj;
        best << w0, w1, w2;
      }
    }
  return best;
}

}  // namespace oracle
