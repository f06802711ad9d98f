#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "geomerge/toy.hpp"
#include "test_util.hpp"

using namespace geomerge;

namespace {

/// Independent oracle: integrate the geodesic ODE of the metric
/// g = diag(theta2^2, theta1^2) with classic RK4.
std::array<double, 2> rk4_geodesic(const ToyPoint& p, const ToyPair& eta, double t_end,
                                   int steps) {
  std::array<double, 4> y{p.theta1, p.theta2, eta[0], eta[1]};
  auto deriv = [](const std::array<double, 4>& s) {
    const double t1 = s[0], t2 = s[1], v1 = s[2], v2 = s[3];
    return std::array<double, 4>{
        v1, v2, -2.0 * v1 * v2 / t2 + t1 * v2 * v2 / (t2 * t2),
        -2.0 * v1 * v2 / t1 + t2 * v1 * v1 / (t1 * t1)};
  };
  const double h = t_end / steps;
  for (int i = 0; i < steps; ++i) {
    const auto k1 = deriv(y);
    std::array<double, 4> y2;
    for (int j = 0; j < 4; ++j) y2[j] = y[j] + 0.5 * h * k1[j];
    const auto k2 = deriv(y2);
    for (int j = 0; j < 4; ++j) y2[j] = y[j] + 0.5 * h * k2[j];
    const auto k3 = deriv(y2);
    for (int j = 0; j < 4; ++j) y2[j] = y[j] + h * k3[j];
    const auto k4 = deriv(y2);
    for (int j = 0; j < 4; ++j) y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
  }
  return {y[0], y[1]};
}

}  // namespace

TEST(ToyMetric, InnerProductAndHorizontality) {
  const ToyPoint p{1.3, 0.7};
  EXPECT_NEAR(toy_inner(p, {2.0, -1.0}, {0.5, 3.0}),
              0.7 * 0.7 * 2.0 * 0.5 + 1.3 * 1.3 * (-1.0) * 3.0, 1e-14);
  EXPECT_NEAR(toy_is_horizontal(p, {0.4 * 1.3, 0.4 * 0.7}), 0.0, 1e-15);
  EXPECT_GT(std::abs(toy_is_horizontal(p, {1.3, -0.7})), 1.0);
  // The vertical direction (theta1, -theta2) is metric-orthogonal to the
  // horizontal direction (theta1, theta2).
  EXPECT_NEAR(toy_inner(p, {1.3, -0.7}, {1.3, 0.7}), 0.0, 1e-14);
}

TEST(ToyGeodesic, ClosedFormMatchesOdeIntegration) {
  const ToyPoint p{1.2, 0.8};
  for (double c : {0.35, -0.2}) {
    const ToyPair eta{c * p.theta1, c * p.theta2};
    const ToyPoint endpoint = toy_geodesic(p, eta, 1.0);
    const auto ode = rk4_geodesic(p, eta, 1.0, 4000);
    EXPECT_NEAR(endpoint.theta1, ode[0], 1e-6);
    EXPECT_NEAR(endpoint.theta2, ode[1], 1e-6);
  }
}

TEST(ToyGeodesic, HorizontalRaysPreserveTheRatio) {
  const ToyPoint p{2.0, 0.5};
  const ToyPair eta{0.3 * p.theta1, 0.3 * p.theta2};
  const double ratio0 = p.theta1 / p.theta2;
  for (int i = 0; i <= 20; ++i) {
    const double t = i / 20.0;
    const ToyPoint q = toy_geodesic(p, eta, t);
    EXPECT_NEAR(q.theta1 / q.theta2, ratio0, 1e-12);
  }
}

TEST(ToyGeodesic, DomainViolationThrows) {
  const ToyPoint p{1.0, 1.0};
  EXPECT_THROW(toy_geodesic(p, {-1.0, 0.1}, 1.0), toy_domain_error);
  EXPECT_NO_THROW(toy_geodesic(p, {-1.0, 0.1}, 0.4));
}

TEST(ToyPredictor, GaugeInvariantProduct) {
  const ToyPoint p{2.0, 3.0};
  EXPECT_EQ(toy_predictor(p), 6.0);
  EXPECT_NEAR(toy_quotient_distance(p, ToyPoint{4.0, 1.5}), 0.0, 1e-14);
  EXPECT_NEAR(toy_quotient_distance(p, ToyPoint{1.0, 1.0}), 5.0, 1e-14);
}

TEST(ToyFrechet, PredictorMeanAndRepresentative) {
  const ToyFrechetResult res = toy_frechet({ToyPoint{1.0, 1.0}, ToyPoint{3.0, 1.0}});
  EXPECT_EQ(res.w_star, 2.0);
  EXPECT_NEAR(res.representative.theta1 * res.representative.theta2, 2.0, 1e-14);
  const ToyFrechetResult weighted =
      toy_frechet({ToyPoint{1.0, 1.0}, ToyPoint{3.0, 1.0}}, {0.25, 0.75});
  EXPECT_NEAR(weighted.w_star, 2.5, 1e-14);
  // Negative mean predictor lands on the negative sheet.
  const ToyFrechetResult neg = toy_frechet({ToyPoint{-2.0, 1.0}});
  EXPECT_NEAR(neg.w_star, -2.0, 1e-14);
  EXPECT_NEAR(neg.representative.theta1 * neg.representative.theta2, -2.0, 1e-14);
}

TEST(ToyFrechet, ZeroMeanPredictorIsDegenerate) {
  EXPECT_THROW(toy_frechet({ToyPoint{1.0, 1.0}, ToyPoint{-1.0, 1.0}}), toy_domain_error);
}

TEST(ToyFim, RankOneWithPinnedEntries) {
  const DenseMatrix F = toy_fim(ToyPoint{2.0, 0.5}, ToyFisherInputs{1.0, 1.0});
  EXPECT_NEAR(F(0, 0), 0.25, 1e-14);
  EXPECT_NEAR(F(0, 1), 1.0, 1e-14);
  EXPECT_NEAR(F(1, 0), 1.0, 1e-14);
  EXPECT_NEAR(F(1, 1), 4.0, 1e-14);
  const double det = F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
  EXPECT_LT(std::abs(det), 1e-12 * F.squaredNorm());
  // Scaling by sxx/sigma2 multiplies the matrix.
  const DenseMatrix F2 = toy_fim(ToyPoint{2.0, 0.5}, ToyFisherInputs{2.0, 0.5});
  EXPECT_MAT_NEAR(F2, DenseMatrix(4.0 * F), 1e-13);
}

TEST(ToyPathology, FisherCollapsesGeometricSurvives) {
  const ToyPoint p{2.0, 0.5};
  const ToyPair merged = toy_fisher_pathology(p, ToyFisherInputs{1.0, 1.0});
  EXPECT_LT(std::abs(merged[0]), 1e-12);
  EXPECT_LT(std::abs(merged[1]), 1e-12);
  // The quotient merge of the same pair keeps the predictor.
  const ToyFrechetResult fr = toy_frechet({p, ToyPoint{-p.theta1, -p.theta2}});
  EXPECT_NEAR(fr.w_star, toy_predictor(p), 1e-14);
}

TEST(ToyEmit, OrbitHasConstantPredictor) {
  const std::vector<ToyCurveRow> rows = emit_orbit(ToyPoint{2.0, 3.0}, 5);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows.front().t, 0.0);
  EXPECT_EQ(rows.back().t, 1.0);
  for (const ToyCurveRow& row : rows) {
    EXPECT_TRUE(row.ok);
    EXPECT_NEAR(row.predictor, 6.0, 1e-12);
    EXPECT_NEAR(row.theta1 * row.theta2, 6.0, 1e-12);
  }
  // The gauge sweep actually moves the representative.
  EXPECT_GT(std::abs(rows.front().theta1 - rows.back().theta1), 1e-3);
}

TEST(ToyEmit, GeodesicRowsReportDomainViolations) {
  const std::vector<ToyCurveRow> rows =
      emit_geodesic(ToyPoint{1.0, 1.0}, ToyPair{-1.0, 0.1}, 5);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_TRUE(rows[0].ok);
  EXPECT_TRUE(rows[1].ok);  // t = 0.25 keeps 1 + 2*eta*t positive
  EXPECT_FALSE(rows[2].ok);
  EXPECT_FALSE(rows[4].ok);
  EXPECT_TRUE(std::isnan(rows[4].theta1));
}

TEST(ToyEmit, GeodesicPredictorIsAffineForHorizontalVelocity) {
  const ToyPoint p{1.3, 0.6};
  const ToyPair eta{0.4 * p.theta1, 0.4 * p.theta2};
  const std::vector<ToyCurveRow> rows = emit_geodesic(p, eta, 21);
  const double w0 = rows[0].predictor;
  const double slope = (rows[1].predictor - w0) / (rows[1].t - rows[0].t);
  for (const ToyCurveRow& row : rows)
    EXPECT_NEAR(row.predictor, w0 + slope * (row.t - rows[0].t), 1e-12);
}

TEST(ToyEmit, MergeComparisonPinnedRows) {
  const std::vector<ToyCurveRow> rows =
      emit_merge_comparison({ToyPoint{2.0, 0.5}, ToyPoint{0.5, 2.0}});
  ASSERT_EQ(rows.size(), 4u);  // two inputs, naive average, quotient merge
  EXPECT_NEAR(rows[0].predictor, 1.0, 1e-14);
  EXPECT_NEAR(rows[1].predictor, 1.0, 1e-14);
  // Naive parameter average lands at (1.25, 1.25): predictor inflated.
  EXPECT_NEAR(rows[2].theta1, 1.25, 1e-14);
  EXPECT_NEAR(rows[2].predictor, 1.5625, 1e-14);
  // The quotient merge averages predictors instead.
  EXPECT_NEAR(rows[3].predictor, 1.0, 1e-14);
}

TEST(ToyCsv, HeaderAndParseableRows) {
  const std::vector<ToyCurveRow> rows = emit_orbit(ToyPoint{2.0, 3.0}, 3);
  const std::string csv = to_csv(rows);
  std::istringstream in(csv);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "t,theta1,theta2,predictor");
  int count = 0;
  while (std::getline(in, line)) {
    double t, a, b, w;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &t, &a, &b, &w), 4);
    EXPECT_NEAR(a * b, w, 1e-12);
    ++count;
  }
  EXPECT_EQ(count, 3);
}
