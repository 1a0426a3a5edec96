#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ivdr/errors.hpp"
#include "ivdr/estimators.hpp"
#include "ivdr/inference.hpp"
#include "ivdr/rng.hpp"
#include "ivdr/simulation.hpp"
#include "oracles.hpp"

using namespace ivdr;

namespace {

// Z=0 arm: mean A 0.25, mean Y 3; Z=1 arm: mean A 0.75, mean Y 7.
// The modifier column is constant zero (the V-null analog).
Dataset wald_fixture() {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(8, 1);
  Eigen::VectorXd z(8), a(8), y(8);
  z << 0, 0, 0, 0, 1, 1, 1, 1;
  a << 0, 0, 0, 1, 1, 1, 1, 0;
  y << 2, 3, 3, 4, 6, 7, 7, 8;
  return Dataset(W, z, a, y, {"v"}, 0);
}

// exact-prediction nuisance models: least-squares fits of targets that lie in
// the feature span, so predictions are exact and unclipped
NuisanceFits exact_nuisance(const Dataset& ds, const Eigen::VectorXd& ma_target,
                            const Eigen::VectorXd& g_target,
                            const Eigen::VectorXd& mu_target) {
  auto ma = fit_learner(LearnerSpec::least_squares(), ma_features(ds), ma_target);
  auto g = fit_learner(LearnerSpec::least_squares(), g_features(ds), g_target);
  auto mu = fit_learner(LearnerSpec::least_squares(), mu_features(ds), mu_target);
  return NuisanceFits(FitMode::Parametric, std::move(ma), std::move(g), std::move(mu));
}

Dataset modifier_fixture(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd W(n, 1);
  Eigen::VectorXd z(n), a(n), y(n);
  for (int i = 0; i < n; ++i) {
    W(i, 0) = (i % 4 < 2) ? -1.0 : 1.0;  // E[V]=0, E[V^2]=1 exactly
    z[i] = i % 2;
    a[i] = (i % 3 == 0) ? 1.0 : 0.0;
    y[i] = rng.normal();
  }
  return Dataset(W, z, a, y, {"v"}, 0);
}

}  // namespace

TEST_CASE("tsls reduces to the hand Wald ratio on the two-arm fixture") {
  const Dataset ds = wald_fixture();
  const TslsCore core = tsls_core(ds);
  CHECK(std::abs(core.psi_c - 8.0) < 1e-10);
  CHECK(std::abs(core.psi_v) < 1e-10);
  const EffectEstimate est = estimate_tsls(ds);
  CHECK(est.diag.weak_instrument);  // V-null analog is rank deficient
}

TEST_CASE("tsls recovers an exact linear system under perfect adherence") {
  const int n = 40;
  Rng rng(12);
  Eigen::MatrixXd W(n, 1);
  Eigen::VectorXd z(n), a(n), y(n);
  for (int i = 0; i < n; ++i) {
    W(i, 0) = rng.normal();
    z[i] = i % 2;
    a[i] = z[i];
    y[i] = 2.0 * a[i];  // psi_c = 2, psi_v = 0, exact
  }
  const Dataset ds(W, z, a, y, {"v"}, 0);
  const TslsCore core = tsls_core(ds);
  CHECK(core.psi_c == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(core.psi_v) < 1e-10);
}

TEST_CASE("iv-g on the Wald fixture matches the ratio and a grid-search root") {
  const Dataset ds = wald_fixture();
  const NuisanceLibraries libs = NuisanceLibraries::defaults(ds.n());
  const NuisanceFits nu = build_nuisance(ds, FitMode::Parametric, libs, 1);
  const IvgCore core = iv_g_core(ds, nu);
  CHECK(core.psi_c == doctest::Approx(8.0).epsilon(1e-8));

  // independent root: minimize the squared norm of the two nontrivial moment
  // equations over (beta0, psi_c)
  const Eigen::VectorXd K = core.K;
  auto objective = [&](double beta0, double psi) {
    double e1 = 0.0, e2 = 0.0;
    for (int i = 0; i < ds.n(); ++i) {
      const double r = ds.y()[i] - beta0 - psi * ds.a()[i];
      e1 += r;
      e2 += K[i] * r;
    }
    return e1 * e1 + e2 * e2;
  };
  const Eigen::Vector2d root = oracle::grid_minimize_2d(objective, -10, 10, -20, 20);
  CHECK(std::abs(core.psi_c - root[1]) < 1e-6);
}

TEST_CASE("iv-g estimating equation residual vanishes at the solution") {
  ScenarioConfig cfg;
  cfg.n = 400;
  const Dataset ds = generate_dataset(cfg, 42);
  const NuisanceFits nu =
      build_nuisance(ds, FitMode::Parametric, NuisanceLibraries::defaults(ds.n()), 1);
  const IvgCore core = iv_g_core(ds, nu);

  const int p = ds.n_cov();
  const Eigen::VectorXd V = ds.modifier();
  Eigen::VectorXd resid = ds.y() - core.x_my * core.beta -
                          ds.a().cwiseProduct(Eigen::VectorXd::Constant(ds.n(), core.psi_c) +
                                              core.psi_v * V);
  Eigen::VectorXd eq(p + 3);
  for (int j = 0; j <= p; ++j) eq[j] = core.x_my.col(j).dot(resid);
  eq[p + 1] = core.K.dot(resid);
  eq[p + 2] = core.K.cwiseProduct(V).dot(resid);
  CHECK(eq.cwiseAbs().maxCoeff() < 1e-8 * ds.n());
}

TEST_CASE("iv-g estimates a null effect as null") {
  const int n = 20000;
  Rng rng(77);
  Eigen::MatrixXd W(n, 1);
  Eigen::VectorXd z(n), a(n), y(n);
  for (int i = 0; i < n; ++i) {
    W(i, 0) = rng.normal();
    z[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    a[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-1.2 * z[i]))) ? 1.0 : 0.0;
    y[i] = 1.0 + 0.5 * W(i, 0) + rng.normal();  // no treatment effect
  }
  const Dataset ds(W, z, a, y, {"v"}, 0);
  const NuisanceFits nu =
      build_nuisance(ds, FitMode::Parametric, NuisanceLibraries::defaults(n), 1);
  const EffectEstimate est = estimate_iv_g(ds, nu);
  CHECK(std::abs(est.psi_c) < 4.0 * est.se_c);
  CHECK(std::abs(est.psi_v) < 4.0 * est.se_v);
  CHECK(std::abs(est.psi_c) < 0.1);
}

TEST_CASE("initial m-hat: ratio, null contrast, denominator floor") {
  const Dataset ds = modifier_fixture(12, 5);
  const int n = ds.n();
  const Eigen::VectorXd z = ds.z();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  SUBCASE("direct ratio") {
    const NuisanceFits nu = exact_nuisance(ds, 0.2 * ones + 0.5 * z, 0.5 * ones,
                                           0.3 * ones + 1.0 * z);
    const InitialEffect init = initial_m_hat(ds, nu);
    for (int i = 0; i < n; ++i) {
      CHECK(init.m_hat[i] == doctest::Approx(2.0).epsilon(1e-9));
      // m_y = mu(0) - m_hat * ma(0) = 0.3 - 2 * 0.2
      CHECK(init.m_y_hat[i] == doctest::Approx(-0.1).epsilon(1e-9));
    }
    CHECK(init.floor_count == 0);
  }
  SUBCASE("zero numerator gives zero regardless of denominator") {
    const NuisanceFits nu =
        exact_nuisance(ds, 0.2 * ones + 0.001 * z, 0.5 * ones, 0.7 * ones);
    const InitialEffect init = initial_m_hat(ds, nu);
    for (int i = 0; i < n; ++i) CHECK(std::abs(init.m_hat[i]) < 1e-9);
  }
  SUBCASE("denominator 0.001 floors to 0.01 and is logged") {
    const NuisanceFits nu =
        exact_nuisance(ds, 0.2 * ones + 0.001 * z, 0.5 * ones, 0.3 * ones + 1.0 * z);
    const InitialEffect init = initial_m_hat(ds, nu);
    for (int i = 0; i < n; ++i) CHECK(init.m_hat[i] == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(init.floor_count == n);
  }
}

TEST_CASE("clever covariate: standardized modifier, zeta arithmetic, floors") {
  const Dataset ds = modifier_fixture(12, 6);
  const int n = ds.n();
  const Eigen::VectorXd z = ds.z();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  SUBCASE("zeta from the displayed product, no floor") {
    // ma(1,W) = 0.5, g = 0.5 -> zeta^2 = 0.0625
    const NuisanceFits nu =
        exact_nuisance(ds, 0.25 * ones + 0.25 * z, 0.5 * ones, ones + z);
    const CleverCovariate cc = clever_covariate(ds, nu);
    CHECK(cc.floor_count == 0);
    for (int i = 0; i < n; ++i) {
      CHECK(cc.zeta2[i] == doctest::Approx(0.0625).epsilon(1e-12));
      // E[V]=0, E[V^2]=1: h = (1, V) / zeta^2
      CHECK(cc.h(i, 0) == doctest::Approx(1.0 / 0.0625).epsilon(1e-9));
      CHECK(cc.h(i, 1) == doctest::Approx(ds.modifier()[i] / 0.0625).epsilon(1e-9));
    }
  }
  SUBCASE("raw zeta below 0.025 is floored and counted") {
    // ma(1,W) = 0.1, g = 0.5 -> raw 0.0025 -> 0.025
    const NuisanceFits nu =
        exact_nuisance(ds, 0.3 * ones - 0.2 * z, 0.5 * ones, ones + z);
    const CleverCovariate cc = clever_covariate(ds, nu);
    CHECK(cc.floor_count == n);
    for (int i = 0; i < n; ++i) CHECK(cc.zeta2[i] == doctest::Approx(0.025).epsilon(1e-12));
  }
  SUBCASE("constant modifier is degenerate") {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(8, 1);
    Eigen::VectorXd z8(8), a8(8), y8(8);
    for (int i = 0; i < 8; ++i) {
      z8[i] = i % 2;
      a8[i] = (i / 2) % 2;
      y8[i] = i;
    }
    const Dataset flat(W, z8, a8, y8, {"v"}, 0);
    const Eigen::VectorXd o8 = Eigen::VectorXd::Ones(8);
    const NuisanceFits nu =
        exact_nuisance(flat, 0.25 * o8 + 0.25 * flat.z(), 0.5 * o8, o8 + flat.z());
    CHECK_THROWS_AS(clever_covariate(flat, nu), DegenerateModifier);
  }
}

TEST_CASE("epsilon solve: fixed point, grid oracle, degenerate exposure") {
  SUBCASE("initial fit already solving the equation gives zero epsilon") {
    const int n = 16;
    Eigen::MatrixXd W(n, 1);
    Eigen::VectorXd z(n), a(n), y(n);
    for (int i = 0; i < n; ++i) {
      W(i, 0) = (i % 4 < 2) ? -1.0 : 1.0;
      z[i] = i % 2;
      a[i] = (i % 3 == 0) ? 1.0 : 0.0;
    }
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd ma = 0.25 * ones + 0.5 * z;
    const Eigen::VectorXd v = W.col(0);
    // mu = m_y + m_hat * ma with m_y = 1, m_hat = 0.5 + 0.5 V
    Eigen::VectorXd mu(n);
    for (int i = 0; i < n; ++i) mu[i] = 1.0 + (0.5 + 0.5 * v[i]) * ma[i];
    for (int i = 0; i < n; ++i) y[i] = a[i] * (0.5 + 0.5 * v[i]) + 1.0;  // zero residual
    const Dataset ds(W, z, a, y, {"v"}, 0);
    const NuisanceFits nu = exact_nuisance(ds, ma, 0.5 * ones, mu);
    const InitialEffect init = initial_m_hat(ds, nu);
    const CleverCovariate cc = clever_covariate(ds, nu);
    const Eigen::Vector2d eps = solve_epsilon(ds, nu, init, cc);
    CHECK(eps.cwiseAbs().maxCoeff() < 1e-9);

    // and the projection of the uncorrected line is the line itself
    const TmleCore core = iv_tmle_core(ds, nu);
    CHECK(core.psi_c == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(core.psi_v == doctest::Approx(0.5).epsilon(1e-9));
  }

  SUBCASE("hand fixture matches a refined grid minimization") {
    const int n = 6;
    Eigen::MatrixXd W(n, 1);
    Eigen::VectorXd z(n), a(n), y(n);
    W.col(0) << -1.2, 0.4, 1.0, -0.3, 0.8, -0.7;
    z << 0, 1, 0, 1, 1, 0;
    a << 0, 1, 1, 0, 1, 0;
    y << 0.5, 2.0, -1.0, 0.3, 1.7, -0.2;
    const Dataset ds(W, z, a, y, {"v"}, 0);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const NuisanceFits nu = exact_nuisance(ds, 0.3 * ones + 0.4 * z, 0.6 * ones,
                                           0.8 * ones + 0.9 * z - 0.2 * W.col(0));
    const InitialEffect init = initial_m_hat(ds, nu);
    const CleverCovariate cc = clever_covariate(ds, nu);
    const Eigen::Vector2d eps = solve_epsilon(ds, nu, init, cc);

    const Eigen::VectorXd K = iv_tmle_core(ds, nu).K;
    auto objective = [&](double e0, double e1) {
      Eigen::Vector2d eq = Eigen::Vector2d::Zero();
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d h = cc.h.row(i).transpose();
        const double mstar = init.m_hat[i] + h[0] * e0 + h[1] * e1;
        eq += h * (K[i] * (y[i] - a[i] * mstar - init.m_y_hat[i]));
      }
      return eq.squaredNorm();
    };
    const Eigen::Vector2d grid =
        oracle::grid_minimize_2d(objective, eps[0] - 2, eps[0] + 2, eps[1] - 2, eps[1] + 2);
    CHECK(std::abs(eps[0] - grid[0]) < 1e-5);
    CHECK(std::abs(eps[1] - grid[1]) < 1e-5);
  }

  SUBCASE("no treated rows make the system singular") {
    const int n = 12;
    Eigen::MatrixXd W(n, 1);
    Eigen::VectorXd z(n), a = Eigen::VectorXd::Zero(n), y(n);
    for (int i = 0; i < n; ++i) {
      W(i, 0) = (i % 4 < 2) ? -1.0 : 1.0;
      z[i] = i % 2;
      y[i] = i * 0.3;
    }
    const Dataset ds(W, z, a, y, {"v"}, 0);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const NuisanceFits nu =
        exact_nuisance(ds, 0.3 * ones + 0.4 * ds.z(), 0.5 * ones, ones + ds.z());
    const InitialEffect init = initial_m_hat(ds, nu);
    const CleverCovariate cc = clever_covariate(ds, nu);
    CHECK_THROWS_AS(solve_epsilon(ds, nu, init, cc), TmleDegenerate);
  }
}

TEST_CASE("under perfect adherence the estimators match ordinary least squares") {
  const int n = 4000;
  Rng rng(2024);
  Eigen::MatrixXd W(n, 1);
  Eigen::VectorXd z(n), a(n), y(n);
  for (int i = 0; i < n; ++i) {
    W(i, 0) = rng.normal();
    z[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    a[i] = z[i];
    y[i] = 0.3 + 0.7 * W(i, 0) + (2.0 + 1.0 * W(i, 0)) * a[i] + rng.normal();
  }
  const Dataset ds(W, z, a, y, {"v"}, 0);

  // OLS oracle of Y on (1, V, A, A*V)
  Eigen::MatrixXd X(n, 4);
  X.col(0).setOnes();
  X.col(1) = W.col(0);
  X.col(2) = a;
  X.col(3) = a.cwiseProduct(W.col(0));
  const Eigen::VectorXd ols = X.completeOrthogonalDecomposition().solve(y);

  const TslsCore ts = tsls_core(ds);
  CHECK(std::abs(ts.psi_c - ols[2]) < 1e-6);
  CHECK(std::abs(ts.psi_v - ols[3]) < 1e-6);

  const NuisanceFits nu =
      build_nuisance(ds, FitMode::Parametric, NuisanceLibraries::defaults(n), 1);
  const IvgCore ig = iv_g_core(ds, nu);
  CHECK(std::abs(ig.psi_c - ols[2]) < 1e-6);
  CHECK(std::abs(ig.psi_v - ols[3]) < 1e-6);

  // The exposure fit sits at the probability clip under perfect adherence, so
  // the identification ratio carries a 1/0.998 distortion that the
  // fluctuation only partially removes; the match is close but not exact.
  const TmleCore tm = iv_tmle_core(ds, nu);
  CHECK(std::abs(tm.psi_c - ols[2]) < 0.02);
  CHECK(std::abs(tm.psi_v - ols[3]) < 0.02);
}

TEST_CASE("adding a constant to the outcome leaves psi unchanged") {
  ScenarioConfig cfg;
  cfg.n = 600;
  const Dataset ds = generate_dataset(cfg, 99);
  Eigen::VectorXd y2 = ds.y().array() + 7.3;
  const Dataset shifted(ds.W(), ds.z(), ds.a(), y2, ds.covariate_names(), ds.modifier_index());

  const TslsCore t1 = tsls_core(ds), t2 = tsls_core(shifted);
  CHECK(std::abs(t1.psi_c - t2.psi_c) < 1e-8);
  CHECK(std::abs(t1.psi_v - t2.psi_v) < 1e-8);

  const NuisanceLibraries libs = NuisanceLibraries::defaults(ds.n());
  const NuisanceFits n1 = build_nuisance(ds, FitMode::Parametric, libs, 1);
  const NuisanceFits n2 = build_nuisance(shifted, FitMode::Parametric, libs, 1);
  const IvgCore g1 = iv_g_core(ds, n1), g2 = iv_g_core(shifted, n2);
  CHECK(std::abs(g1.psi_c - g2.psi_c) < 1e-8);
  CHECK(std::abs(g1.psi_v - g2.psi_v) < 1e-8);
  const TmleCore m1 = iv_tmle_core(ds, n1), m2 = iv_tmle_core(shifted, n2);
  CHECK(std::abs(m1.psi_c - m2.psi_c) < 1e-8);
  CHECK(std::abs(m1.psi_v - m2.psi_v) < 1e-8);
}

TEST_CASE("parametric nuisance fits are deterministic") {
  ScenarioConfig cfg;
  cfg.n = 300;
  const Dataset ds = generate_dataset(cfg, 7);
  const NuisanceLibraries libs = NuisanceLibraries::defaults(ds.n());
  const NuisanceFits a = build_nuisance(ds, FitMode::Parametric, libs, 1);
  const NuisanceFits b = build_nuisance(ds, FitMode::Parametric, libs, 2);
  CHECK(std::get<FittedLearner>(a.ma_model()).coefficients() ==
        std::get<FittedLearner>(b.ma_model()).coefficients());
  CHECK(a.mu(ds, 1.0) == b.mu(ds, 1.0));
}

TEST_CASE("an intercept-only instrument fit recovers the randomization ratio") {
  ScenarioConfig cfg;
  cfg.n = 500;
  const Dataset ds = generate_dataset(cfg, 11);
  const FittedLearner g = fit_logistic(Eigen::MatrixXd::Ones(ds.n(), 1), ds.z());
  const double p = 1.0 / (1.0 + std::exp(-g.coefficients()[0]));
  CHECK(p == doctest::Approx(ds.z().mean()).epsilon(1e-9));
}

TEST_CASE("ensemble exposure fit beats the misspecified parametric logistic in CV risk") {
  ScenarioConfig cfg;
  cfg.n = 1000;
  cfg.misspec_a = true;
  const Dataset ds = generate_dataset(cfg, 13);
  NuisanceLibraries libs = NuisanceLibraries::defaults(cfg.n);
  const NuisanceFits nu = build_nuisance(ds, FitMode::Ensemble, libs, 21);
  const auto& sl = std::get<SuperLearnerFit>(nu.ma_model());
  // member 0 is the main-terms logistic, which misses the strong interaction
  CHECK(sl.ensemble_cv_risk < sl.member_cv_risk[0]);
}

TEST_CASE("run_method dispatches default inference per method") {
  ScenarioConfig cfg;
  cfg.n = 300;
  const Dataset ds = generate_dataset(cfg, 3);
  EstimationConfig ec;
  ec.libs = NuisanceLibraries::defaults(ds.n());
  ec.ci.bootstrap_B = 30;
  ec.ci.bootstrap_seed = 4;
  ec.seed = 5;

  const EffectEstimate ts = run_method(ds, Method::Tsls, ec);
  CHECK(ts.diag.variance == "classical");
  const EffectEstimate ig = run_method(ds, Method::IvG, ec);
  CHECK(ig.diag.variance == "bootstrap");
  CHECK(ig.ci_c.lo <= ig.psi_c);
  CHECK(ig.ci_c.hi >= ig.psi_c);

  ec.ci.tsls_variance = TslsVariance::Sandwich;
  const EffectEstimate ts2 = run_method(ds, Method::Tsls, ec);
  CHECK(ts2.diag.variance == "sandwich");
  CHECK(ts2.psi_c == ts.psi_c);
}
