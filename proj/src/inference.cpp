#include "ivdr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <thread>

#include "ivdr/errors.hpp"
#include "ivdr/rng.hpp"

namespace ivdr {

// Acklam's rational approximation to the standard normal quantile,
// |relative error| < 1.2e-9 on (0,1)
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > phigh) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

Eigen::Matrix2d InfluenceMatrix::covariance() const {
  const double n = static_cast<double>(rows.rows());
  const Eigen::RowVector2d mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  return (centered.transpose() * centered) / std::max(1.0, n - 1.0) / n;
}

namespace {

struct EvalValues {
  Eigen::VectorXd maz, ma1, ma0, g, mu1, mu0, K;
};

EvalValues eval_values(const Dataset& ds, const NuisanceFits& nu, bool with_mu) {
  EvalValues v;
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

// 2x2 empirical mean of A K (1,V)(1,V)^T
Eigen::Matrix2d ivg_m_matrix(const Dataset& ds, const Eigen::VectorXd& K) {
  const Eigen::VectorXd V = ds.modifier();
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  for (int i = 0; i < ds.n(); ++i) {
    const double ak = ds.a()[i] * K[i];
    M(0, 0) += ak;
    M(0, 1) += ak * V[i];
    M(1, 0) += ak * V[i];
    M(1, 1) += ak * V[i] * V[i];
  }
  return M / static_cast<double>(ds.n());
}

Eigen::MatrixXd ivg_rows(const Dataset& eval, const EvalValues& v,
                         const Eigen::Vector2d& psi, const Eigen::VectorXd& beta,
                         const Eigen::Matrix2d& Minv) {
  const int n = eval.n();
  const int p = eval.n_cov();
  if (beta.size() != p + 1)
    throw SpecError("iv_g_influence: beta length does not match the m_y design");
  const Eigen::VectorXd V = eval.modifier();
  Eigen::MatrixXd X(n, p + 1);
  X.col(0).setOnes();
  X.rightCols(p) = eval.W();
  const Eigen::VectorXd fit_my = X * beta;

  Eigen::MatrixXd D(n, 2);
  for (int i = 0; i < n; ++i) {
    // residual consistent with the estimating equation: Y - m_y - A m(W;psi)
    const double r = eval.y()[i] - fit_my[i] - eval.a()[i] * (psi[0] + psi[1] * V[i]);
    const Eigen::Vector2d u(v.K[i] * r, v.K[i] * V[i] * r);
    D.row(i) = (Minv * u).transpose();
  }
  return D;
}

struct TmleContext {
  double mean_v = 0.0, mean_v2 = 0.0, var_v = 0.0;
  Eigen::Matrix2d correction = Eigen::Matrix2d::Identity();
};

// context quantities (V-moments, linearization factor) from a reference sample
TmleContext tmle_context(const Dataset& ref, const EvalValues& v) {
  TmleContext ctx;
  const Eigen::VectorXd V = ref.modifier();
  const int n = ref.n();
  ctx.mean_v = V.mean();
  ctx.mean_v2 = V.squaredNorm() / static_cast<double>(n);
  ctx.var_v = ctx.mean_v2 - ctx.mean_v * ctx.mean_v;
  if (ctx.var_v <= 1e-12) throw DegenerateModifier("tmle_eif: Var(V) = 0");

  Eigen::Matrix2d Q = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const double zeta2 =
        std::max(v.ma1[i] * v.ma1[i] * v.g[i] * (1.0 - v.g[i]), 0.025);
    Eigen::Vector2d c((ctx.mean_v2 - ctx.mean_v * V[i]) / ctx.var_v,
                      (V[i] - ctx.mean_v) / ctx.var_v);
    const Eigen::Vector2d h = c / zeta2;
    Q += c * h.transpose();
    S += (v.K[i] * ref.a()[i]) * (h * h.transpose());
  }
  Q /= static_cast<double>(n);
  S /= static_cast<double>(n);
  Eigen::FullPivLU<Eigen::Matrix2d> lu(S);
  if (!lu.isInvertible()) throw TmleDegenerate("tmle_eif: singular fluctuation system");
  ctx.correction = Q * lu.inverse();
  return ctx;
}

Eigen::MatrixXd tmle_rows(const Dataset& eval, const EvalValues& v,
                          const Eigen::VectorXd& m_star, const Eigen::Vector2d& psi,
                          const TmleContext& ctx) {
  const int n = eval.n();
  const Eigen::VectorXd V = eval.modifier();
  Eigen::MatrixXd D(n, 2);
  for (int i = 0; i < n; ++i) {
    const double zeta2 =
        std::max(v.ma1[i] * v.ma1[i] * v.g[i] * (1.0 - v.g[i]), 0.025);
    const Eigen::Vector2d c((ctx.mean_v2 - ctx.mean_v * V[i]) / ctx.var_v,
                            (V[i] - ctx.mean_v) / ctx.var_v);
    const Eigen::Vector2d h = c / zeta2;
    // initial m_y, back-solved from the identification ratio at Z = 0
    double den = v.ma1[i] - v.ma0[i];
    if (std::abs(den) < 0.01) den = den >= 0.0 ? 0.01 : -0.01;
    const double m_y = v.mu0[i] - ((v.mu1[i] - v.mu0[i]) / den) * v.ma0[i];
    // outcome-residual and exposure-residual terms
    const double t1 = v.K[i] * (eval.y()[i] - v.maz[i] * m_star[i] - m_y);
    const double t2 = v.K[i] * m_star[i] * (eval.a()[i] - v.maz[i]);
    const Eigen::Vector2d resid_part = ctx.correction * (h * (t1 - t2));
    // D_W: projection residual against the working model
    const Eigen::Vector2d dw = c * (m_star[i] - psi[0] - psi[1] * V[i]);
    D.row(i) = (resid_part + dw).transpose();
  }
  return D;
}

}  // namespace

InfluenceMatrix iv_g_influence(const Dataset& ds, const NuisanceFits& nu,
                               const Eigen::Vector2d& psi_hat,
                               const Eigen::VectorXd& beta_hat) {
  const EvalValues v = eval_values(ds, nu, false);
  const Eigen::Matrix2d M = ivg_m_matrix(ds, v.K);
  Eigen::FullPivLU<Eigen::Matrix2d> lu(M);
  if (!lu.isInvertible())
    throw DegenerateDesign("iv_g_influence: singular M matrix");
  InfluenceMatrix out;
  out.method = nu.mode() == FitMode::Ensemble ? Method::IvGSl : Method::IvG;
  out.rows = ivg_rows(ds, v, psi_hat, beta_hat, lu.inverse());
  return out;
}

Eigen::MatrixXd iv_g_influence_rows(const Dataset& eval, const NuisanceFits& nu,
                                    const Eigen::Vector2d& psi, const Eigen::VectorXd& beta,
                                    const Dataset& train) {
  const EvalValues vt = eval_values(train, nu, false);
  const Eigen::Matrix2d M = ivg_m_matrix(train, vt.K);
  Eigen::FullPivLU<Eigen::Matrix2d> lu(M);
  if (!lu.isInvertible())
    throw DegenerateDesign("iv_g_influence: singular M matrix on training fold");
  const EvalValues ve = eval_values(eval, nu, false);
  return ivg_rows(eval, ve, psi, beta, lu.inverse());
}

InfluenceMatrix tmle_eif(const Dataset& ds, const NuisanceFits& nu,
                         const Eigen::VectorXd& m_star, const Eigen::Vector2d& psi_star) {
  if (m_star.size() != ds.n()) throw SpecError("tmle_eif: m_star length mismatch");
  const EvalValues v = eval_values(ds, nu, true);
  const TmleContext ctx = tmle_context(ds, v);
  InfluenceMatrix out;
  out.method = nu.mode() == FitMode::Ensemble ? Method::TmleSl : Method::Tmle;
  out.rows = tmle_rows(ds, v, m_star, psi_star, ctx);
  return out;
}

Eigen::MatrixXd tmle_eif_rows(const Dataset& eval, const NuisanceFits& nu,
                              const Eigen::Vector2d& epsilon, const Eigen::Vector2d& psi,
                              const Dataset& train) {
  const EvalValues vt = eval_values(train, nu, false);
  const TmleContext ctx = tmle_context(train, vt);
  const EvalValues ve = eval_values(eval, nu, true);

  // m* on the validation rows from the training-fold fluctuation
  const int n = eval.n();
  const Eigen::VectorXd V = eval.modifier();
  Eigen::VectorXd m_star(n);
  for (int i = 0; i < n; ++i) {
    double den = ve.ma1[i] - ve.ma0[i];
    if (std::abs(den) < 0.01) den = den >= 0.0 ? 0.01 : -0.01;
    const double m_hat = (ve.mu1[i] - ve.mu0[i]) / den;
    const double zeta2 =
        std::max(ve.ma1[i] * ve.ma1[i] * ve.g[i] * (1.0 - ve.g[i]), 0.025);
    const Eigen::Vector2d c((ctx.mean_v2 - ctx.mean_v * V[i]) / ctx.var_v,
                            (V[i] - ctx.mean_v) / ctx.var_v);
    m_star[i] = m_hat + (c / zeta2).dot(epsilon);
  }
  return tmle_rows(eval, ve, m_star, psi, ctx);
}

Eigen::Matrix2d cv_if_variance(int n, const IfClosure& evaluate, int folds,
                               std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cv_if_variance: need at least 2 folds");
  if (folds > n) throw ConfigError("cv_if_variance: more folds than rows");
  const std::vector<int> assignment = make_folds(n, folds, seed);

  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  for (int k = 0; k < folds; ++k) {
    std::vector<int> train, eval;
    for (int i = 0; i < n; ++i)
      (assignment[static_cast<std::size_t>(i)] == k ? eval : train).push_back(i);
    Eigen::MatrixXd D;
    try {
      D = evaluate(train, eval);
    } catch (const Error& e) {
      throw ConfigError(std::string("cv_if_variance: fold evaluation failed: ") + e.what());
    }
    acc += (D.transpose() * D) / static_cast<double>(eval.size());
  }
  // mean outer product over folds, then the 1/n scaling to the estimate
  return acc / static_cast<double>(folds) / static_cast<double>(n);
}

BootstrapResult bootstrap_ci(const Dataset& ds,
                             const std::function<Eigen::Vector2d(const Dataset&)>& estimator,
                             const CiConfig& cfg) {
  const int B = cfg.bootstrap_B;
  if (B < 1) throw ConfigError("bootstrap: B must be >= 1");
  const int n = ds.n();

  std::vector<std::optional<Eigen::Vector2d>> results(static_cast<std::size_t>(B));
  auto worker = [&](int lo, int hi) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int b = lo; b < hi; ++b) {
      Rng rng(derive_seed(cfg.bootstrap_seed, static_cast<std::uint64_t>(b)));
      for (int attempt = 0; attempt < 10; ++attempt) {
        for (int i = 0; i < n; ++i)
          idx[static_cast<std::size_t>(i)] =
              static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        try {
          results[static_cast<std::size_t>(b)] = estimator(ds.subset(idx));
          break;
        } catch (const Error&) {
          // redraw, up to the retry cap
        }
      }
    }
  };

  const int threads = std::max(1, cfg.threads);
  if (threads == 1 || B < 2 * threads) {
    worker(0, B);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (B + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int lo = t * chunk;
      const int hi = std::min(B, lo + chunk);
      if (lo < hi) pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  std::vector<double> c, v;
  for (const auto& r : results)
    if (r) {
      c.push_back((*r)[0]);
      v.push_back((*r)[1]);
    }
  BootstrapResult out;
  out.n_success = static_cast<int>(c.size());
  out.failures = B - out.n_success;
  out.unstable = out.failures > static_cast<int>(0.05 * B);
  if (out.n_success == 0) {
    out.unstable = true;
    return out;
  }

  auto summarize = [&](std::vector<double>& s, double& se, Interval& ci) {
    std::sort(s.begin(), s.end());
    const double ns = static_cast<double>(s.size());
    double mean = 0.0;
    for (double x : s) mean += x;
    mean /= ns;
    double var = 0.0;
    for (double x : s) var += (x - mean) * (x - mean);
    se = ns > 1 ? std::sqrt(var / (ns - 1.0)) : 0.0;
    const double alpha = 1.0 - cfg.level;
    // nearest-rank order statistics
    auto rank = [&](double q) {
      const int r = static_cast<int>(std::ceil(q * ns));
      return std::clamp(r, 1, static_cast<int>(ns));
    };
    ci = {s[static_cast<std::size_t>(rank(alpha / 2.0) - 1)],
          s[static_cast<std::size_t>(rank(1.0 - alpha / 2.0) - 1)]};
  };
  summarize(c, out.se_c, out.ci_c);
  summarize(v, out.se_v, out.ci_v);
  return out;
}

}  // namespace ivdr
