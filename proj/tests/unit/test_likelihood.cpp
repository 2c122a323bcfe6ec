#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "adaptaper/likelihood.hpp"
#include "adaptaper/range_select.hpp"
#include "adaptaper/sim.hpp"
#include "oracles.hpp"

using namespace adaptaper;

namespace {

PointSet uniform(std::size_t n, std::uint64_t seed) {
  Rng rng = stream(seed, 0);
  return gen_locations(UniformRandom{n}, rng);
}

Eigen::VectorXd simulate(const PointSet& pts, const CovarianceModel& m, std::uint64_t seed) {
  Rng rng = stream(seed, 1);
  return sample_gp(pts.points(), m, rng);
}

// Exact Fisher information 1/2 tr(Sigma^{-1} Sigma_i Sigma^{-1} Sigma_j) from dense derivatives.
Eigen::MatrixXd fisher(const PointSet& pts, const CovarianceModel& m, const ParamVector& psi) {
  const Eigen::MatrixXd inv = dense_cov(pts.points(), m).inverse();
  const auto d = cov_param_derivatives(pts.points(), m, psi);
  const auto k = static_cast<Eigen::Index>(psi.size());
  Eigen::MatrixXd f(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      f(i, j) = 0.5 * (inv * d[static_cast<std::size_t>(i)] * inv * d[static_cast<std::size_t>(j)]).trace();
    }
  }
  return f;
}

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Loglik, UnitTaperEqualsExact) {
  const PointSet pts = uniform(20, 1);
  const CovarianceModel m = MaternParams{1.5, 7.0, 0.5};
  const Eigen::VectorXd x = simulate(pts, m, 2);
  const double exact = exact_loglik(pts.points(), x, m);
  EXPECT_NEAR(tapered_loglik(pts.points(), x, m, ones_pattern(20)), exact, 1e-10);
  EXPECT_NEAR(exact, oracle::gaussian_loglik(dense_cov(pts.points(), m), x), 1e-10);
}

TEST(Loglik, SinglePointAtZero) {
  const std::vector<Point> one{{0.3, 0.3}};
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  EXPECT_EQ(exact_loglik(one, x, MaternParams{1.0, 3.0, 0.5}), 0.0);
  EXPECT_EQ(tapered_loglik(one, x, MaternParams{1.0, 3.0, 0.5}, ones_pattern(1)), 0.0);
}

TEST(Loglik, TaperedMatchesDenseOracle) {
  const PointSet pts = uniform(60, 3);
  const CovarianceModel m = MaternParams{1.0, 8.0, 0.5};
  const Eigen::VectorXd x = simulate(pts, m, 4);
  std::vector<double> theta(pts.size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = 0.2 + 0.2 * pts[i].y;
  const SparseSymMatrix t = taper_matrix(pts, theta, Hyperspherical{2});
  const Eigen::MatrixXd td = t.dense();
  const double expected = oracle::tapered_loglik(dense_cov(pts.points(), m).cwiseProduct(td), td, x);
  EXPECT_NEAR(tapered_loglik(pts.points(), x, m, t), expected, 1e-9);
  EXPECT_NEAR(tapered_loglik(pts.points(), x, m, parameters_of(m), t), expected, 1e-9);
}

TEST(Loglik, BlockEqualities) {
  const PointSet pts = uniform(100, 5);
  const CovarianceModel m = MaternParams{2.0, 6.0, 0.5};
  const Eigen::VectorXd x = simulate(pts, m, 6);
  const std::vector<int> one(100, 0);
  EXPECT_NEAR(block_loglik(pts.points(), x, m, one), exact_loglik(pts.points(), x, m), 1e-10);
  std::vector<int> singletons(100);
  double expected = 0.0;
  for (int i = 0; i < 100; ++i) {
    singletons[static_cast<std::size_t>(i)] = i;
    expected += -0.5 * std::log(4.0) - x[i] * x[i] / 8.0;
  }
  EXPECT_NEAR(block_loglik(pts.points(), x, m, singletons), expected, 1e-10);
  const auto ids = block_assignment(pts, 2);
  EXPECT_NEAR(block_loglik(pts.points(), x, m, ids), tapered_loglik(pts.points(), x, m, block_pattern(ids)), 1e-10);
  EXPECT_THROW((void)block_loglik(pts.points(), x, m, std::vector<int>(5, 0)), ShapeError);
}

TEST(Loglik, Errors) {
  const PointSet pts = uniform(10, 7);
  const CovarianceModel m = MaternParams{1.0, 5.0, 0.5};
  EXPECT_THROW((void)exact_loglik(pts.points(), Eigen::VectorXd::Zero(3), m), ShapeError);
  EXPECT_THROW((void)tapered_loglik(pts.points(), Eigen::VectorXd::Zero(10), m, ones_pattern(4)), ShapeError);
}

TEST(Godambe, UnitTaperIsFisherInformation) {
  const PointSet pts = uniform(40, 8);
  for (const CovarianceModel& m : {CovarianceModel{MaternParams{10.0, 10.0, 0.5}}, CovarianceModel{NonstatExpParams{4.0, -6.0, 6.0}}}) {
    const ParamVector psi = parameters_of(m);
    const GodambeResult g = godambe(pts.points(), m, psi, ones_pattern(40));
    const Eigen::MatrixXd f = fisher(pts, m, psi);
    EXPECT_LT(relative_error(g.G, f), 1e-8);
    EXPECT_LT(relative_error(-g.EH, f), 1e-8);
    EXPECT_LT(relative_error(g.EVV, f), 1e-8);
    EXPECT_EQ(g.G, g.G.transpose());
    EXPECT_TRUE((g.asd.array() > 0.0).all());
  }
}

TEST(Godambe, ScalarVarianceParameter) {
  const PointSet pts = uniform(30, 9);
  const double sigma2 = 2.5;
  const CovarianceModel m = MaternParams{std::sqrt(sigma2), 5.0, 0.5};
  const ParamVector psi({{"sigma2", sigma2, Transform::identity}});
  const GodambeResult g = godambe(pts.points(), m, psi, ones_pattern(30));
  EXPECT_NEAR(g.G(0, 0), 30.0 / (2.0 * sigma2 * sigma2), 1e-10);
  EXPECT_NEAR(g.asd[0], sigma2 * std::sqrt(2.0 / 30.0), 1e-10);
}

TEST(Godambe, MatchesMonteCarloScoreMoments) {
  Rng rng = stream(10, 0);
  const PointSet pts = gen_locations(PerturbedGrid{5, 0.45}, rng);
  const CovarianceModel m = MaternParams{1.0, 4.0, 0.5};
  const ParamVector psi = parameters_of(m);
  const SparseSymMatrix t = taper_matrix(pts, std::vector<double>(pts.size(), 0.5), Hyperspherical{2});
  ASSERT_LT(t.nonzeros(), 25 * 25);
  const GodambeResult g = godambe(pts.points(), m, psi, t);
  auto cov = [&](const Eigen::VectorXd& v) { return dense_cov(pts.points(), with_parameters(m, psi.with_values(v))); };
  const oracle::ScoreMoments mc = oracle::score_moments(cov, psi.values(), t.dense(), 5000, 11);
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      EXPECT_LT(std::abs(mc.vv(i, j) - g.EVV(i, j)), 3.0 * mc.vv_se(i, j)) << i << j;
      EXPECT_LT(std::abs(mc.h(i, j) - g.EH(i, j)), 3.0 * mc.h_se(i, j)) << i << j;
    }
  }
}

TEST(Godambe, TaperLosesEfficiency) {
  const PointSet pts = uniform(80, 12);
  const CovarianceModel m = MaternParams{1.0, 10.0, 0.5};
  const ParamVector psi = parameters_of(m);
  const GodambeResult full = godambe(pts.points(), m, psi, ones_pattern(80));
  const GodambeResult tap = godambe(pts.points(), m, psi, taper_matrix(pts, std::vector<double>(80, 0.3), Hyperspherical{2}));
  // G^{-1} of the tapered estimator dominates the inverse Fisher information.
  const Eigen::MatrixXd diff = tap.G.inverse() - full.G.inverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (diff + diff.transpose()));
  EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-10 * full.G.inverse().norm());
}

TEST(Godambe, Errors) {
  const PointSet pts = uniform(10, 13);
  const CovarianceModel m = MaternParams{1.0, 5.0, 0.5};
  EXPECT_THROW((void)godambe(pts.points(), m, parameters_of(m), ones_pattern(4)), ShapeError);
  EXPECT_THROW((void)godambe(pts.points(), m, ParamVector{}, ones_pattern(10)), DomainError);
  // Two copies of the same parameter make EVV singular.
  const ParamVector twice({{"kappa", std::log(5.0), Transform::log}, {"kappa", std::log(5.0), Transform::log}});
  EXPECT_THROW((void)godambe(pts.points(), m, twice, ones_pattern(10)), std::runtime_error);
}

TEST(Mle, AscentFromTruthAndDeterminism) {
  const PointSet pts = uniform(100, 14);
  const CovarianceModel m = MaternParams{1.0, 10.0, 0.5};
  const Eigen::VectorXd x = simulate(pts, m, 15);
  const ParamVector psi0 = parameters_of(m);
  const MleResult a = fit_mle(pts.points(), x, m, psi0);
  const MleResult b = fit_mle(pts.points(), x, m, psi0);
  EXPECT_GE(a.loglik, exact_loglik(pts.points(), x, m));
  EXPECT_EQ(a.psi.values(), b.psi.values());
  EXPECT_EQ(a.loglik, b.loglik);
  EXPECT_NEAR(a.loglik, exact_loglik(pts.points(), x, with_parameters(m, a.psi)), 1e-9);
  const SparseSymMatrix t = taper_matrix(pts, std::vector<double>(100, 0.4), Hyperspherical{2});
  const MleResult c = fit_mle(pts.points(), x, m, psi0, &t);
  EXPECT_GE(c.loglik, tapered_loglik(pts.points(), x, m, t));
}

TEST(Mle, SinglePointIsNotIdentifiable) {
  const std::vector<Point> one{{0.5, 0.5}};
  const CovarianceModel m = MaternParams{1.0, 10.0, 0.5};
  EXPECT_THROW((void)fit_mle(one, Eigen::VectorXd::Constant(1, 0.7), m, parameters_of(m)), IdentifiabilityError);
  // With only the variance free the maximizer is x^2.
  const ParamVector var({{"sigma2", 0.0, Transform::log}});
  const MleResult r = fit_mle(one, Eigen::VectorXd::Constant(1, 0.7), m, var);
  EXPECT_NEAR(r.psi[0].natural(), 0.49, 1e-6);
}

TEST(Mle, BudgetExhaustion) {
  const PointSet pts = uniform(30, 16);
  const CovarianceModel m = MaternParams{1.0, 10.0, 0.5};
  MleOptions opt;
  opt.max_evaluations = 5;
  try {
    (void)fit_mle(pts.points(), simulate(pts, m, 17), m, parameters_of(m), nullptr, opt);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.best().size(), 2u);
  }
}

TEST(Mle, EmpiricallyUnbiased) {
  const PointSet pts = uniform(400, 18);
  const CovarianceModel m = MaternParams{1.0, 10.0, 0.5};
  const ParamVector psi0 = parameters_of(m);
  const int reps = 50;
  Eigen::MatrixXd est(reps, 2);
  const Eigen::LLT<Eigen::MatrixXd> llt(dense_cov(pts.points(), m));
  std::mt19937_64 rng(19);
  std::normal_distribution<double> normal;
  for (int r = 0; r < reps; ++r) {
    Eigen::VectorXd z(400);
    for (auto& v : z) v = normal(rng);
    const MleResult fit = fit_mle(pts.points(), llt.matrixL() * z, m, psi0);
    est(r, 0) = fit.psi[0].natural();
    est(r, 1) = fit.psi[1].natural();
  }
  const Eigen::RowVectorXd mean = est.colwise().mean();
  const Eigen::RowVectorXd sd = ((est.rowwise() - mean).array().square().colwise().sum() / (reps - 1)).sqrt();
  EXPECT_LT(std::abs(mean[0] - 1.0), 3.0 * sd[0] / std::sqrt(reps));
  EXPECT_LT(std::abs(mean[1] - 10.0), 3.0 * sd[1] / std::sqrt(reps));
}
