#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gcsam/analysis.hpp"
#include "gcsam/models.hpp"
#include "gcsam/toys.hpp"

using namespace gcsam;

namespace {

// Non-centered 2-D quadratic: f(w) = 0.5 w^T A w + c^T w with A = diag(1, 5).
LossGrad quad2d(const ParamSet& p) {
  double x = p.value("w").data[0], y = p.value("w").data[1];
  LossGrad out;
  out.loss = 0.5 * (x * x + 5.0 * y * y) + 0.7 * x - 0.3 * y;
  out.grads.add("w", Tensor::vec({x + 0.7, 5.0 * y - 0.3}));
  return out;
}

// Dense polar-grid maximum of f(w0 + eps) - f(w0) over the disc |eps| <= rho.
double brute_force_sharpness_2d(const GradientOracle& oracle, const ParamSet& w0, double rho,
                                int angles = 512, int radii = 64) {
  double base = oracle(w0).loss;
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < angles; ++a) {
    double th = 2.0 * M_PI * a / angles;
    for (int r = 1; r <= radii; ++r) {
      double rr = rho * r / radii;
      ParamSet p = w0.values_copy();
      p.value("w").data[0] += rr * std::cos(th);
      p.value("w").data[1] += rr * std::sin(th);
      best = std::max(best, oracle(p).loss - base);
    }
  }
  return best;
}

}  // namespace

TEST(Sharpness, QuadraticOneDimensionalIsExact) {
  double lambda = 2.5, rho = 0.3;
  SharpnessEstimate est =
      estimate_sharpness(quadratic_bowl_oracle(lambda), scalar_param(0.0), rho, 3, 2, 7);
  EXPECT_NEAR(est.estimate, 0.5 * lambda * rho * rho, 1e-9);
  EXPECT_EQ(est.num_directions, 3);
  EXPECT_EQ(est.ascent_steps, 2);
}

TEST(Sharpness, LinearLossIsExact) {
  ParamSet c;
  c.add("u", Tensor::vec({3.0, 0.0, -4.0}));
  SharpnessEstimate est =
      estimate_sharpness(linear_oracle(c), c.zeros_like(), 0.25, 4, 2, 11);
  EXPECT_NEAR(est.estimate, 0.25 * 5.0, 1e-9);
}

TEST(Sharpness, MonotoneOverNestedBalls) {
  ParamSet w0;
  w0.add("w", Tensor::vec({0.3, -0.2}));
  GradientOracle oracle = quad2d;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double lo = estimate_sharpness(oracle, w0, 0.2, 8, 4, seed).estimate;
    double hi = estimate_sharpness(oracle, w0, 0.4, 8, 4, seed).estimate;
    EXPECT_GE(hi, lo - 1e-12);
  }
}

TEST(Sharpness, WithinBruteForceEnvelope) {
  ParamSet w0;
  w0.add("w", Tensor::vec({0.3, -0.2}));
  double rho = 0.5;
  double brute = brute_force_sharpness_2d(quad2d, w0, rho);
  SharpnessEstimate est = estimate_sharpness(quad2d, w0, rho, 64, 5, 999);
  EXPECT_LE(est.estimate, brute + 1e-4 * (std::abs(brute) + 1.0));
  EXPECT_GE(est.estimate, 0.95 * brute);
}

TEST(Sharpness, DeterministicGivenSeed) {
  ParamSet w0;
  w0.add("w", Tensor::vec({0.1, 0.2}));
  SharpnessEstimate a = estimate_sharpness(quad2d, w0, 0.3, 8, 3, 42);
  SharpnessEstimate b = estimate_sharpness(quad2d, w0, 0.3, 8, 3, 42);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.base_loss, b.base_loss);
  ASSERT_EQ(a.directions.size(), b.directions.size());
  for (std::size_t i = 0; i < a.directions.size(); ++i)
    EXPECT_EQ(a.directions[i].best_gap, b.directions[i].best_gap);
}

TEST(Sharpness, OracleFailureFlagsPartialResult) {
  // Fails whenever the first coordinate is perturbed upward; some directions
  // still succeed, so the estimate is finite but marked partial.
  GradientOracle flaky = [](const ParamSet& p) {
    double x = p.value("w").data[0];
    if (x > 0.05) throw EvalError("synthetic oracle failure");
    LossGrad out;
    out.loss = 0.5 * p.global_sq_norm();
    for (const auto& e : p) out.grads.add(e.name, e.value);
    return out;
  };
  ParamSet w;
  w.add("w", Tensor::vec({0.0, 0.0}));
  SharpnessEstimate est = estimate_sharpness(flaky, w, 0.2, 16, 2, 31);
  EXPECT_TRUE(est.partial);
  EXPECT_TRUE(std::isfinite(est.estimate));
}

TEST(Sharpness, Validation) {
  ParamSet w = scalar_param(0.0);
  EXPECT_THROW(estimate_sharpness(quadratic_bowl_oracle(), w, 0.0, 4, 2, 1), ValidationError);
  EXPECT_THROW(estimate_sharpness(quadratic_bowl_oracle(), w, 0.1, 0, 2, 1), ValidationError);
  EXPECT_THROW(estimate_sharpness(quadratic_bowl_oracle(), w, 0.1, 4, -1, 1), ValidationError);
}

TEST(Directions, OrthogonalOverManySeeds) {
  MlpSpec spec;
  spec.layer_sizes = {3, 8, 2};
  spec.seed = 1;
  ParamSet params = init_params(spec);
  for (int s = 0; s < 100; ++s) {
    auto [d1, d2] = orthogonal_gaussian_directions(params, 5000 + s);
    EXPECT_LE(std::abs(ParamSet::global_dot(d1, d2)), 1e-10);
    EXPECT_NEAR(std::sqrt(d1.global_sq_norm()), 1.0, 1e-12);
    EXPECT_NEAR(std::sqrt(d2.global_sq_norm()), 1.0, 1e-12);
  }
}

TEST(Directions, PerLayerMode) {
  MlpSpec spec;
  spec.layer_sizes = {3, 8, 2};
  spec.seed = 1;
  ParamSet params = init_params(spec);
  for (int s = 0; s < 20; ++s) {
    auto [d1, d2] = orthogonal_gaussian_directions(params, 6000 + s,
                                                   DirectionNormalization::kPerLayer);
    EXPECT_LE(std::abs(ParamSet::global_dot(d1, d2)), 1e-10);
    for (const auto& e : d1) EXPECT_NEAR(std::sqrt(sq_norm(e.value)), 1.0, 1e-12);
    EXPECT_NEAR(std::sqrt(d2.global_sq_norm()), std::sqrt(d1.global_sq_norm()), 1e-12);
  }
}

TEST(Directions, SameSeedSameDirections) {
  ParamSet p;
  p.add("w", Tensor::zeros({10}));
  auto [a1, a2] = orthogonal_gaussian_directions(p, 7);
  auto [b1, b2] = orthogonal_gaussian_directions(p, 7);
  EXPECT_EQ(a1.value("w").data, b1.value("w").data);
  EXPECT_EQ(a2.value("w").data, b2.value("w").data);
}

TEST(Directions, OneDimensionalParamsRejected) {
  ParamSet p = scalar_param(1.0);
  EXPECT_THROW(orthogonal_gaussian_directions(p, 1), ValidationError);
  ParamSet empty;
  EXPECT_THROW(orthogonal_gaussian_directions(empty, 1), ValidationError);
}

TEST(Landscape, QuadraticClosedFormAndIndexing) {
  ParamSet w;
  w.add("w", Tensor::zeros({8}));
  auto [d1, d2] = orthogonal_gaussian_directions(w, 21);
  LossFn loss = [](const ParamSet& p) { return 0.5 * p.global_sq_norm(); };
  LandscapeGrid grid = sample_landscape(loss, w, landscape_axis(-1.0, 1.0, 21),
                                        landscape_axis(-1.0, 1.0, 21), d1, d2);
  EXPECT_EQ(grid.losses.size(), 441u);
  EXPECT_EQ(grid.center_a, 10u);
  EXPECT_EQ(grid.center_b, 10u);
  EXPECT_EQ(grid.losses.at(10, 10), grid.base_loss);
  EXPECT_EQ(grid.base_loss, 0.0);
  for (std::size_t ia = 0; ia < 21; ++ia)
    for (std::size_t ib = 0; ib < 21; ++ib) {
      double a = grid.a_values[ia], b = grid.b_values[ib];
      EXPECT_NEAR(grid.losses.at(ia, ib), 0.5 * (a * a + b * b), 1e-10);
    }
}

TEST(Landscape, CenterIsBitwiseBaseLoss) {
  MlpSpec spec;
  spec.layer_sizes = {2, 6, 2};
  spec.seed = 31;
  ParamSet params = init_params(spec);
  Dataset d = gen_two_moons(64, 0.2, 17);
  LossFn loss = make_dataset_loss(spec, d);
  auto [d1, d2] = orthogonal_gaussian_directions(params, 5);
  LandscapeGrid grid = sample_landscape(loss, params, landscape_axis(-0.5, 0.5, 5),
                                        landscape_axis(-0.5, 0.5, 5), d1, d2);
  EXPECT_EQ(grid.losses.at(grid.center_a, grid.center_b), loss(params));
}

TEST(Landscape, SymmetryForEvenQuadratic) {
  ParamSet w;
  w.add("w", Tensor::zeros({6}));
  auto [d1, d2] = orthogonal_gaussian_directions(w, 3);
  LossFn loss = [](const ParamSet& p) { return 0.5 * p.global_sq_norm(); };
  std::vector<double> axis = landscape_axis(-1.0, 1.0, 9);
  LandscapeGrid grid = sample_landscape(loss, w, axis, axis, d1, d2);
  std::size_t n = axis.size();
  for (std::size_t ia = 0; ia < n; ++ia)
    for (std::size_t ib = 0; ib < n; ++ib)
      EXPECT_NEAR(grid.losses.at(ia, ib), grid.losses.at(n - 1 - ia, n - 1 - ib), 1e-10);
}

TEST(Landscape, NonFiniteCellsBecomeNanMarkers) {
  ParamSet w = scalar_param(0.0);
  w.add("w2", Tensor::vec({0.0}));
  auto [d1, d2] = orthogonal_gaussian_directions(w, 9);
  LossFn loss = [](const ParamSet& p) {
    double x = p.value("w").data[0];
    if (std::abs(x) > 0.4) throw EvalError("diverged");
    return x * x;
  };
  LandscapeGrid grid = sample_landscape(loss, w, landscape_axis(-1.0, 1.0, 5),
                                        landscape_axis(-1.0, 1.0, 3), d1, d2);
  int nan_cells = 0;
  for (double v : grid.losses.data)
    if (std::isnan(v)) ++nan_cells;
  EXPECT_GT(nan_cells, 0);
  EXPECT_FALSE(std::isnan(grid.losses.at(grid.center_a, grid.center_b)));
}

TEST(Landscape, AxisMustContainZero) {
  EXPECT_THROW(landscape_axis(0.5, 1.0, 5), ValidationError);
  EXPECT_THROW(landscape_axis(-1.0, 1.0, 1), ValidationError);
  std::vector<double> axis = landscape_axis(-1.0, 3.0, 5);
  EXPECT_EQ(axis[1], 0.0);
}

TEST(Landscape, CsvExportSchema) {
  ParamSet w;
  w.add("w", Tensor::zeros({4}));
  auto [d1, d2] = orthogonal_gaussian_directions(w, 2);
  LossFn loss = [](const ParamSet& p) { return 0.5 * p.global_sq_norm(); };
  LandscapeGrid grid = sample_landscape(loss, w, landscape_axis(-1.0, 1.0, 3),
                                        landscape_axis(-1.0, 1.0, 3), d1, d2);
  std::string path =
      (std::filesystem::temp_directory_path() / "gcsam_test_landscape.csv").string();
  write_landscape_csv(grid, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "a,b,loss");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 9);
  std::filesystem::remove(path);
}

TEST(Bound, ZeroWeightClosedForm) {
  BoundParams bp;
  bp.n = 500;
  bp.k = 20;
  bp.delta = 0.1;
  bp.eta = 2.0;
  bp.rho = 0.3;
  double L = 1.7;
  double expect = L + std::sqrt((4.0 * std::log(500.0 / 0.1)) / 499.0);
  EXPECT_NEAR(eval_bound(L, 0.0, bp).value, expect, 1e-12);
}

TEST(Bound, MonotonicInWeightNorm) {
  BoundParams bp;
  bp.n = 1000;
  bp.k = 100;
  bp.delta = 0.05;
  bp.eta = 1.0;
  bp.rho = 0.05;
  double prev = eval_bound(0.0, 0.0, bp).value;
  for (double w2 : {0.5, 1.0, 2.0, 4.0}) {
    double cur = eval_bound(0.0, w2, bp).value;
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

TEST(Bound, DecreasingInDatasetSize) {
  BoundParams bp;
  bp.k = 100;
  bp.delta = 0.05;
  bp.eta = 1.0;
  bp.rho = 0.05;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n : {100u, 1000u, 10000u}) {
    bp.n = n;
    double cur = eval_bound(0.0, 1.0, bp).value;
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(Bound, DecreasingAsDeltaGrows) {
  BoundParams bp;
  bp.n = 1000;
  bp.k = 100;
  bp.eta = 1.0;
  bp.rho = 0.05;
  bp.delta = 0.01;
  double strict = eval_bound(0.0, 1.0, bp).value;
  bp.delta = 0.5;
  double loose = eval_bound(0.0, 1.0, bp).value;
  EXPECT_LT(loose, strict);
}

TEST(Bound, RhoDerivedFromSigma) {
  BoundParams bp;
  bp.n = 1000;
  bp.k = 100;
  bp.delta = 0.05;
  bp.eta = 1.0;
  bp.sigma = 0.2;
  BoundEval res = eval_bound(0.0, 1.0, bp);
  EXPECT_TRUE(res.rho_derived_from_sigma);
  double expect_rho =
      std::sqrt(100.0) * 0.2 * (1.0 + std::sqrt(std::log(1000.0) / 100.0)) / 1000.0;
  EXPECT_NEAR(res.rho, expect_rho, 1e-15);

  bp.rho = 0.05;
  BoundEval direct = eval_bound(0.0, 1.0, bp);
  EXPECT_FALSE(direct.rho_derived_from_sigma);
  EXPECT_DOUBLE_EQ(direct.rho, 0.05);
}

TEST(Bound, DomainAndValidationErrors) {
  BoundParams bp;
  bp.n = 100;
  bp.k = 10;
  bp.delta = 0.05;
  bp.eta = 1.0;
  bp.rho = 0.1;
  bp.constant_term = -1e6;
  EXPECT_THROW(eval_bound(0.0, 0.0, bp), DomainError);

  BoundParams missing;
  missing.n = 100;
  missing.k = 10;
  missing.eta = 1.0;
  EXPECT_THROW(eval_bound(0.0, 0.0, missing), ValidationError);

  BoundParams bad_delta = bp;
  bad_delta.constant_term = 0.0;
  bad_delta.delta = 1.5;
  EXPECT_THROW(eval_bound(0.0, 0.0, bad_delta), ValidationError);
}
