#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/beta.hpp>

#include "adaptaper/tapers.hpp"
#include "oracles.hpp"

using namespace adaptaper;

TEST(IncompleteBeta, MatchesBoost) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> x(0.0, 1.0);
  std::uniform_real_distribution<double> shape(0.1, 8.0);
  for (int k = 0; k < 500; ++k) {
    const double a = shape(rng);
    const double b = shape(rng);
    const double v = x(rng);
    EXPECT_NEAR(regularized_incomplete_beta(v, a, b), boost::math::ibeta(a, b, v), 1e-13) << a << " " << b << " " << v;
  }
  EXPECT_EQ(regularized_incomplete_beta(0.0, 2.0, 3.0), 0.0);
  EXPECT_EQ(regularized_incomplete_beta(1.0, 2.0, 3.0), 1.0);
  EXPECT_THROW((void)regularized_incomplete_beta(1.5, 2.0, 3.0), DomainError);
  EXPECT_THROW((void)regularized_incomplete_beta(0.5, -1.0, 3.0), DomainError);
}

TEST(CapVolume, GeneralFormulaMatchesLowDimensions) {
  for (double x : {-0.9, -0.3, 0.0, 0.2, 0.7}) {
    EXPECT_NEAR(cap_volume(2, 1.3, x), circle_cap_area(1.3, x), 1e-12);
    EXPECT_NEAR(cap_volume(3, 1.3, x), sphere_cap_volume(1.3, x), 1e-12);
  }
  EXPECT_NEAR(cap_volume(5, 2.0, -2.0), ball_volume(5, 2.0), 1e-12);
  EXPECT_EQ(cap_volume(5, 2.0, 2.0), 0.0);
  EXPECT_NEAR(cap_volume(4, 1.0, 0.0), 0.5 * ball_volume(4, 1.0), 1e-13);
}

TEST(Hyperspherical, TwoDimensionalQuadrature) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> range(0.05, 2.0);
  for (int k = 0; k < 300; ++k) {
    const double a = range(rng);
    const double b = range(rng);
    std::uniform_real_distribution<double> dist(0.0, 0.5 * (a + b) * 1.1);
    const double d = dist(rng);
    EXPECT_NEAR(hyperspherical_taper(2, a, b, d), oracle::hyperspherical(2, a, b, d), 1e-6);
  }
}

TEST(Hyperspherical, ThreeDimensionalAnalytic) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> range(0.05, 2.0);
  for (int k = 0; k < 300; ++k) {
    const double a = range(rng);
    const double b = range(rng);
    std::uniform_real_distribution<double> dist(0.0, 0.5 * (a + b));
    const double d = dist(rng);
    const double r = 0.5 * a;
    const double big_r = 0.5 * b;
    const double expected = oracle::sphere_intersection(r, big_r, d) / (4.0 / 3.0 * std::numbers::pi * std::pow(r * big_r, 1.5));
    EXPECT_NEAR(hyperspherical_taper(3, a, b, d), expected, 1e-10);
  }
}

TEST(Hyperspherical, HigherDimensionsMatchLensQuadrature) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> range(0.1, 1.5);
  for (int n : {1, 4, 5, 7}) {
    for (int k = 0; k < 40; ++k) {
      const double a = range(rng);
      const double b = range(rng);
      std::uniform_real_distribution<double> dist(0.0, 0.5 * (a + b));
      const double d = dist(rng);
      EXPECT_NEAR(hyperspherical_taper(n, a, b, d), oracle::hyperspherical(n, a, b, d), 1e-8) << n;
    }
  }
}

TEST(Hyperspherical, ConstantRangeIsEuclidHat) {
  for (int n = 1; n <= 8; ++n) {
    for (double q = 0.0; q < 1.0; q += 0.03125) {
      EXPECT_NEAR(hyperspherical_taper(n, 0.7, 0.7, 0.7 * q), euclid_hat(n, 0.7 * q, 0.7), 1e-10);
    }
  }
}

TEST(Hyperspherical, EuclidHatClosedForms) {
  for (double q = 0.0; q < 1.0; q += 0.05) {
    EXPECT_NEAR(euclid_hat(1, q, 1.0), 1.0 - q, 1e-13);
    EXPECT_NEAR(euclid_hat(3, q, 1.0), 1.0 - 1.5 * q + 0.5 * q * q * q, 1e-13);
    const double circ = 2.0 / std::numbers::pi * (std::acos(q) - q * std::sqrt(1.0 - q * q));
    EXPECT_NEAR(euclid_hat(2, q, 1.0), circ, 1e-13);
  }
  EXPECT_EQ(euclid_hat(2, 1.0, 1.0), 0.0);
}

TEST(Hyperspherical, ContainmentAndSupport) {
  // Small ball fully inside the large one: (r/R)^{n/2}.
  EXPECT_NEAR(hyperspherical_taper(2, 0.2, 1.0, 0.1), 0.2, 1e-15);
  EXPECT_NEAR(hyperspherical_taper(3, 0.25, 1.0, 0.0), 0.125, 1e-15);
  EXPECT_EQ(hyperspherical_taper(2, 1.0, 1.0, 1.0), 0.0);
  EXPECT_EQ(hyperspherical_taper(2, 1.0, 1.0, 1.2), 0.0);
  EXPECT_GT(hyperspherical_taper(2, 1.0, 1.0, std::nextafter(1.0, 0.0)), -1e-300);
  EXPECT_EQ(hyperspherical_taper(2, 0.6, 0.6, 0.0), 1.0);
  EXPECT_THROW((void)hyperspherical_taper(2, -1.0, 1.0, 0.1), DomainError);
  EXPECT_THROW((void)hyperspherical_taper(0, 1.0, 1.0, 0.1), DomainError);
}

TEST(Hyperspherical, SymmetricAndBounded) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> range(0.01, 1.0);
  std::uniform_real_distribution<double> coord(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Point s{coord(rng), coord(rng)};
    const Point t{coord(rng), coord(rng)};
    const double a = range(rng);
    const double b = range(rng);
    for (const TaperKind& kind : {TaperKind{Hyperspherical{2}}, TaperKind{Product{1}}, TaperKind{Product{2}}}) {
      const double st = evaluate_taper(kind, s, t, a, b);
      EXPECT_EQ(st, evaluate_taper(kind, t, s, b, a));
      EXPECT_GE(st, 0.0);
      EXPECT_LE(st, 1.0);
      const bool coupled = within_support(metric_distance(support_metric(kind), s, t), a, b);
      if (!coupled) {
        EXPECT_EQ(st, 0.0);
      }
    }
  }
}

TEST(Product, FactorsMatchKernelQuadrature) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> range(0.05, 1.0);
  for (int m : {1, 2}) {
    for (int k = 0; k < 500; ++k) {
      const double a = range(rng);
      const double b = range(rng);
      std::uniform_real_distribution<double> dist(-0.55 * (a + b), 0.55 * (a + b));
      const double s = 0.3;
      const double t = s + dist(rng);
      EXPECT_NEAR(product_taper_factor(m, s, t, a, b), oracle::product_factor(m, s, t, a, b), 1e-8) << m;
    }
  }
}

TEST(Product, StationaryClosedForms) {
  for (double d = 0.0; d < 1.0; d += 0.05) {
    EXPECT_NEAR(product_taper_factor(1, 0.0, d, 1.0, 1.0), 1.0 - d, 1e-14);
    // Autocorrelation of a normalized hat with half-width 1/2.
    const double expected = d <= 0.5 ? 1.0 - 6.0 * d * d + 6.0 * d * d * d : 2.0 * std::pow(1.0 - d, 3);
    EXPECT_NEAR(product_taper_factor(2, 0.0, d, 1.0, 1.0), expected, 1e-13);
  }
  EXPECT_NEAR(product_taper(1, {0.0, 0.0}, {0.25, 0.5}, 1.0, 1.0), 0.75 * 0.5, 1e-14);
  EXPECT_EQ(product_taper(2, {0.0, 0.0}, {1.0, 0.1}, 1.0, 1.0), 0.0);
  EXPECT_THROW((void)product_taper_factor(3, 0.0, 0.1, 1.0, 1.0), DomainError);
}

TEST(Wendland, ShapeAndSupport) {
  EXPECT_EQ(wendland_taper(0.0, 0.3), 1.0);
  EXPECT_EQ(wendland_taper(0.3, 0.3), 0.0);
  EXPECT_NEAR(wendland_taper(0.15, 0.3), std::pow(0.5, 4) * 3.0, 1e-15);
  double prev = 1.0;
  for (double d = 0.0; d < 0.3; d += 0.01) {
    const double w = wendland_taper(d, 0.3);
    EXPECT_LE(w, prev);
    prev = w;
  }
}

TEST(TaperKind, NamesAndValidation) {
  EXPECT_EQ(to_string(Hyperspherical{3}), "hyperspherical(n=3)");
  EXPECT_EQ(to_string(Product{2}), "product(m=2)");
  EXPECT_EQ(support_metric(Product{1}), SupportMetric::chebyshev);
  EXPECT_EQ(support_metric(Hyperspherical{2}), SupportMetric::euclidean);
  EXPECT_THROW(validate(TaperKind{Product{4}}), DomainError);
  EXPECT_THROW((void)evaluate_taper(BlockDiagonal{}, {0, 0}, {0, 0}, 1.0, 1.0), DomainError);
}
