#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "adaptaper/likelihood.hpp"
#include "adaptaper/sim.hpp"

using namespace adaptaper;

namespace {

double mean_nearest_neighbour(const PointSet& pts) {
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) best = std::min(best, distance(pts[i], pts[j]));
    }
    total += best;
  }
  return total / static_cast<double>(pts.size());
}

}  // namespace

TEST(Streams, ReproducibleAndDistinct) {
  Rng a = stream(1, 2);
  Rng b = stream(1, 2);
  Rng c = stream(1, 3);
  Rng d = stream(1, 2, 1);
  const auto va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
  EXPECT_NE(va, d());
}

TEST(Locations, PerturbedGridStaysNearNodes) {
  Rng rng = stream(1, 0);
  const PointSet pts = gen_locations(PerturbedGrid{}, rng);
  ASSERT_EQ(pts.size(), 1024u);
  for (int j = 0; j < 32; ++j) {
    for (int i = 0; i < 32; ++i) {
      const Point p = pts[static_cast<std::size_t>(i + 32 * j)];
      const Point node{(0.5 + i) / 32.0, (0.5 + j) / 32.0};
      EXPECT_LE(std::abs(p.x - node.x), 0.45 / 32.0);
      EXPECT_LE(std::abs(p.y - node.y), 0.45 / 32.0);
      EXPECT_LT(distance(p, node), 0.95 / 32.0);
    }
  }
}

TEST(Locations, ZeroJitterIsRegularGrid) {
  Rng rng = stream(2, 0);
  const PointSet pts = gen_locations(PerturbedGrid{32, 0.0}, rng);
  for (int j = 0; j < 32; ++j) {
    for (int i = 0; i < 32; ++i) {
      EXPECT_EQ(pts[static_cast<std::size_t>(i + 32 * j)], (Point{(0.5 + i) / 32.0, (0.5 + j) / 32.0}));
    }
  }
  EXPECT_THROW((void)gen_locations(PerturbedGrid{32, 0.6}, rng), DomainError);
}

TEST(Locations, AllScenariosInUnitSquare) {
  for (const Scenario& s : {Scenario{PerturbedGrid{}}, Scenario{UniformRandom{1024}}, Scenario{ClusteredLGCP{}}}) {
    Rng rng = stream(3, 0);
    const PointSet pts = gen_locations(s, rng);
    EXPECT_EQ(pts.size(), 1024u) << scenario_name(s);
    for (const auto& p : pts) {
      EXPECT_GE(p.x, 0.0);
      EXPECT_LE(p.x, 1.0);
      EXPECT_GE(p.y, 0.0);
      EXPECT_LE(p.y, 1.0);
    }
  }
}

TEST(Locations, ClusteredIsMoreClusteredThanUniform) {
  const int seeds = 5;
  double clustered = 0.0;
  double uniform = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng a = stream(100 + static_cast<std::uint64_t>(s), 0);
    Rng b = stream(200 + static_cast<std::uint64_t>(s), 0);
    clustered += mean_nearest_neighbour(gen_locations(ClusteredLGCP{}, a)) / seeds;
    uniform += mean_nearest_neighbour(gen_locations(UniformRandom{1024}, b)) / seeds;
  }
  // For 1024 uniform points the mean nearest-neighbour distance is about 0.5 / sqrt(1024).
  EXPECT_NEAR(uniform, 0.5 / 32.0, 0.002);
  EXPECT_LT(clustered, 0.75 * uniform);
}

TEST(Locations, Deterministic) {
  Rng a = stream(4, 9);
  Rng b = stream(4, 9);
  const PointSet pa = gen_locations(ClusteredLGCP{}, a);
  const PointSet pb = gen_locations(ClusteredLGCP{}, b);
  EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pb.begin()));
}

TEST(SampleGp, EmpiricalCovariance) {
  Rng rng = stream(5, 0);
  const PointSet pts = gen_locations(UniformRandom{10}, rng);
  const CovarianceModel m = MaternParams{1.2, 4.0, 0.5};
  const Eigen::MatrixXd sigma = dense_cov(pts.points(), m);
  const int reps = 5000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(10, 10);
  Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(10, 10);
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd x = sample_gp(pts.points(), m, rng);
    const Eigen::MatrixXd xx = x * x.transpose();
    sum += xx;
    sum2 += xx.cwiseProduct(xx);
  }
  const Eigen::MatrixXd mean = sum / reps;
  const Eigen::MatrixXd se = ((sum2 / reps - mean.cwiseProduct(mean)) / (reps - 1)).cwiseSqrt();
  int outside = 0;
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) outside += std::abs(mean(i, j) - sigma(i, j)) > 3.0 * se(i, j);
  }
  EXPECT_EQ(outside, 0);
}

TEST(SampleGp, SinglePointIsStandardNormal) {
  Rng rng = stream(6, 0);
  const std::vector<Point> one{{0.5, 0.5}};
  const int reps = 4000;
  std::vector<double> xs;
  for (int r = 0; r < reps; ++r) xs.push_back(sample_gp(one, MaternParams{1.0, 3.0, 0.5}, rng)[0]);
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  for (int i = 0; i < reps; ++i) {
    const double f = 0.5 * std::erfc(-xs[static_cast<std::size_t>(i)] / std::sqrt(2.0));
    d = std::max({d, std::abs(f - static_cast<double>(i) / reps), std::abs(f - static_cast<double>(i + 1) / reps)});
  }
  // Kolmogorov-Smirnov critical value at the 1% level.
  EXPECT_LT(d, 1.628 / std::sqrt(static_cast<double>(reps)));
}

TEST(SampleGp, ZeroVarianceLimitAndDeterminism) {
  Rng rng = stream(7, 0);
  const PointSet pts = gen_locations(UniformRandom{20}, rng);
  Rng a = stream(8, 0);
  const Eigen::VectorXd tiny = sample_gp(pts.points(), MaternParams{1e-120, 5.0, 0.5}, a);
  EXPECT_LT(tiny.cwiseAbs().maxCoeff(), 1e-100);
  Rng b = stream(9, 0);
  Rng c = stream(9, 0);
  const Eigen::VectorXd xb = sample_gp(pts.points(), MaternParams{1.0, 5.0, 0.5}, b);
  const Eigen::VectorXd xc = sample_gp(pts.points(), MaternParams{1.0, 5.0, 0.5}, c);
  EXPECT_EQ(xb, xc);
}

TEST(ParallelFor, CoversEveryIndexAndRethrowsLowestFailure) {
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  try {
    parallel_for(50, 3, [&](std::size_t i) {
      if (i == 7 || i == 30) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "fail 7");
  }
}

TEST(TaperNames, Parse) {
  EXPECT_TRUE(std::holds_alternative<Wendland>(parse_taper("W").kind));
  const NamedTaper t2h = parse_taper("T2h");
  EXPECT_FALSE(t2h.adaptive);
  EXPECT_EQ(std::get<Hyperspherical>(t2h.kind).n, 2);
  const NamedTaper t3 = parse_taper("T3");
  EXPECT_TRUE(t3.adaptive);
  EXPECT_EQ(std::get<Hyperspherical>(t3.kind).n, 3);
  EXPECT_EQ(std::get<Product>(parse_taper("P2").kind).m, 2);
  EXPECT_TRUE(parse_taper("P1").adaptive);
  EXPECT_TRUE(parse_taper("one").unit);
  EXPECT_TRUE(std::holds_alternative<BlockDiagonal>(parse_taper("block").kind));
  for (const char* bad : {"Q", "T", "Th", "T0", "P3", "Tx"}) EXPECT_THROW((void)parse_taper(bad), DomainError) << bad;
}

TEST(KrigingExperiment, UnitTaperGivesZeroAndThreadsDoNotMatter) {
  KrigingExperimentConfig cfg;
  cfg.scenario = PerturbedGrid{10, 0.45};
  cfg.model = MaternParams{1.0, 10.0, 0.5};
  cfg.stationary_range = 0.25;
  cfg.tapers = {"one", "W", "T2h", "T2", "P1", "P2"};
  cfg.replicates = 3;
  cfg.grid = 8;
  const KrigingExperimentResult serial = run_kriging_experiment(cfg);
  cfg.threads = 3;
  const KrigingExperimentResult parallel = run_kriging_experiment(cfg);
  ASSERT_EQ(serial.summary.size(), 6u);
  EXPECT_NEAR(serial.summary[0].second.mean, 0.0, 1e-12);
  for (std::size_t k = 0; k < serial.summary.size(); ++k) {
    EXPECT_EQ(serial.summary[k].second.mean, parallel.summary[k].second.mean);
    EXPECT_GE(serial.summary[k].second.mean, -1e-9);
  }
  for (const auto& rep : serial.replicates) {
    Eigen::Index lo = rep.tapers[1].nonzeros, hi = lo;
    for (std::size_t k = 1; k < rep.tapers.size(); ++k) {
      lo = std::min(lo, rep.tapers[k].nonzeros);
      hi = std::max(hi, rep.tapers[k].nonzeros);
    }
    EXPECT_EQ(rep.tapers[1].nonzeros, rep.stationary_nonzeros);
    EXPECT_LE(hi - lo, 2);  // max(N epsilon, 2) with N = 100
  }
}

TEST(KrigingExperiment, StalledSelectionKeepsBestIterate) {
  // On these clustered locations the square-support selection stalls with many rows a few
  // non-zeros off target; the replicate still completes and reports the shortfall.
  KrigingExperimentConfig cfg;
  cfg.scenario = ClusteredLGCP{1024};
  cfg.model = MaternParams{1.0, kappa_for_range(0.5, 0.2), 0.5};
  cfg.tapers = {"P2", "T2"};
  cfg.replicates = 1;
  cfg.grid = 4;
  cfg.seed = 1;
  const KrigingExperimentResult r = run_kriging_experiment(cfg);
  const auto& p2 = r.replicates[0].tapers[0];
  const auto& t2 = r.replicates[0].tapers[1];
  EXPECT_GT(p2.rows_off_target, 0);
  EXPECT_EQ(t2.rows_off_target, 0);
  EXPECT_NEAR(static_cast<double>(p2.nonzeros), static_cast<double>(r.replicates[0].stationary_nonzeros),
              0.01 * static_cast<double>(r.replicates[0].stationary_nonzeros));
  EXPECT_GE(p2.relative_mse, 0.0);
}

TEST(KrigingExperiment, InvalidConfig) {
  KrigingExperimentConfig cfg;
  cfg.replicates = 0;
  EXPECT_THROW((void)run_kriging_experiment(cfg), DomainError);
  cfg.replicates = 1;
  cfg.tapers = {"block"};
  EXPECT_THROW((void)run_kriging_experiment(cfg), DomainError);
}

TEST(EstimationExperiment, DegenerateAlphaGrid) {
  // Points evenly spaced on a circle have identical stationary row counts, so the blend targets
  // and the resulting efficiencies coincide at both ends of the alpha grid.
  std::vector<Point> ring;
  for (int k = 0; k < 60; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 60.0;
    ring.push_back({0.5 + 0.4 * std::cos(a), 0.5 + 0.4 * std::sin(a)});
  }
  const PointSet pts(ring);
  const CovarianceModel m = MaternParams{1.0, 5.0, 0.5};
  const long long total = 60 * 7;
  std::vector<std::vector<double>> asd;
  for (double alpha : {0.0, 1.0}) {
    const RowTargets targets = alpha_adaptive_targets(pts, total, alpha);
    for (double t : targets.m) EXPECT_EQ(t, targets.m[0]);
    SelectionParams params;
    params.seed = 1;
    const TaperRanges theta = theta_set(targets, TaperRanges(60, stationary_range_for_density(pts, total)), pts, params);
    const GodambeResult g = godambe(pts.points(), m, parameters_of(m), taper_matrix(pts, theta, Hyperspherical{2}));
    asd.emplace_back(g.asd.data(), g.asd.data() + g.asd.size());
  }
  EXPECT_EQ(asd[0], asd[1]);
}

TEST(EstimationExperiment, RowsAndSparsity) {
  EstimationExperimentConfig cfg;
  cfg.scenario = PerturbedGrid{12, 0.45};
  cfg.density = 0.05;
  cfg.alpha_grid = {0.0, 0.5, 1.0};
  cfg.threads = 2;
  const EstimationExperimentResult r = run_estimation_experiment(cfg);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows.back().method, "block");
  EXPECT_GT(r.rows.back().blocks_per_side, 0);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.asd.size(), 2u);
    for (double a : row.asd) EXPECT_GT(a, 0.0);
    if (row.method == "alpha") {
      EXPECT_LE(std::llabs(row.nonzeros - r.rows[0].nonzeros), 2);
    }
  }
}
