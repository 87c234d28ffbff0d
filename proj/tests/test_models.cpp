#include <cmath>

#include <gtest/gtest.h>

#include "gcsam/data.hpp"
#include "gcsam/finite_diff.hpp"
#include "gcsam/models.hpp"

using namespace gcsam;

namespace {

Batch random_classification_batch(Rng& rng, std::size_t rows, std::size_t width,
                                  std::size_t classes) {
  Batch b;
  b.features = rng.normal_tensor({rows, width});
  for (std::size_t i = 0; i < rows; ++i)
    b.labels.push_back(static_cast<int>(rng.next_u64() % classes));
  return b;
}

}  // namespace

TEST(InitParams, DeterministicGivenSeed) {
  MlpSpec spec;
  spec.layer_sizes = {3, 7, 2};
  spec.seed = 99;
  ParamSet a = init_params(spec);
  ParamSet b = init_params(spec);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a.entry(i).value.data, b.entry(i).value.data);
}

TEST(InitParams, ShapeContract) {
  MlpSpec spec;
  spec.layer_sizes = {2, 3};
  spec.seed = 1;
  ParamSet p = init_params(spec);
  EXPECT_EQ(p.value("W0").shape, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(p.value("b0").shape, (std::vector<std::size_t>{3}));
  for (double v : p.value("b0").data) EXPECT_EQ(v, 0.0);
}

TEST(InitParams, GlorotBound) {
  MlpSpec spec;
  spec.layer_sizes = {2, 3};
  spec.seed = 7;
  double bound = std::sqrt(6.0 / 5.0);
  EXPECT_NEAR(bound, 1.0954, 1e-4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    ParamSet p = init_params(spec);
    for (double v : p.value("W0").data) {
      EXPECT_GE(v, -bound);
      EXPECT_LE(v, bound);
    }
  }
}

TEST(InitParams, HeBound) {
  MlpSpec spec;
  spec.layer_sizes = {4, 5};
  spec.init = InitKind::kHeUniform;
  double bound = std::sqrt(6.0 / 4.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    ParamSet p = init_params(spec);
    for (double v : p.value("W0").data) {
      EXPECT_GE(v, -bound);
      EXPECT_LE(v, bound);
    }
  }
}

TEST(InitParams, InvalidSpecs) {
  MlpSpec one_layer;
  one_layer.layer_sizes = {4};
  EXPECT_THROW(init_params(one_layer), ValidationError);
  MlpSpec zero_width;
  zero_width.layer_sizes = {4, 0, 2};
  EXPECT_THROW(init_params(zero_width), ValidationError);
}

TEST(LossAndGrad, ZeroWeightsGiveLogK) {
  MlpSpec spec;
  spec.layer_sizes = {3, 4};
  spec.seed = 0;
  ParamSet p = init_params(spec);
  for (auto& e : p) e.value = Tensor::zeros(e.value.shape);
  Rng rng(3);
  Batch batch = random_classification_batch(rng, 6, 3, 4);
  LossGrad lg = loss_and_grad(spec, p, batch);
  EXPECT_NEAR(lg.loss, std::log(4.0), 1e-14);
}

TEST(LossAndGrad, MatchesFiniteDifferencesAcrossSpecMatrix) {
  int checked = 0;
  for (auto activation : {Activation::kRelu, Activation::kTanh}) {
    for (auto loss : {LossKind::kSoftmaxXent, LossKind::kMse}) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        MlpSpec spec;
        spec.layer_sizes = {3, 5, 3};
        spec.activation = activation;
        spec.loss = loss;
        spec.seed = 100 + seed;
        ParamSet params = init_params(spec);
        Rng rng(200 + seed);
        Batch batch = random_classification_batch(rng, 5, 3, 3);
        if (activation == Activation::kRelu &&
            preactivation_margin(spec, params, batch) < 1e-4) {
          continue;
        }
        LossGrad lg = loss_and_grad(spec, params, batch);
        LossFn f = [&](const ParamSet& q) { return loss_and_grad(spec, q, batch).loss; };
        FiniteDiffReport fd = finite_diff_gradient(f, params, 1e-6);
        EXPECT_LE(max_rel_error(lg.grads, fd.grads), 1e-5);
        ++checked;
      }
    }
  }
  EXPECT_GE(checked, 10);
}

TEST(LossAndGrad, DuplicatingRowsLeavesLossAndGradsUnchanged) {
  MlpSpec spec;
  spec.layer_sizes = {2, 4, 2};
  spec.activation = Activation::kTanh;
  spec.seed = 5;
  ParamSet params = init_params(spec);
  Rng rng(6);
  Batch batch = random_classification_batch(rng, 4, 2, 2);

  Batch doubled;
  doubled.features = Tensor::zeros({8, 2});
  for (int rep = 0; rep < 2; ++rep)
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 2; ++j)
        doubled.features.at(rep * 4 + i, j) = batch.features.at(i, j);
      if (rep == 0) continue;
    }
  for (int rep = 0; rep < 2; ++rep)
    for (std::size_t i = 0; i < 4; ++i) doubled.labels.push_back(batch.labels[i]);

  LossGrad a = loss_and_grad(spec, params, batch);
  LossGrad b = loss_and_grad(spec, params, doubled);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (std::size_t i = 0; i < a.grads.size(); ++i) {
    const auto& x = a.grads.entry(i).value.data;
    const auto& y = b.grads.entry(i).value.data;
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-14);
  }
}

TEST(LossAndGrad, DeterministicBitwise) {
  MlpSpec spec;
  spec.layer_sizes = {3, 6, 4, 2};
  spec.seed = 13;
  ParamSet params = init_params(spec);
  Rng rng(14);
  Batch batch = random_classification_batch(rng, 7, 3, 2);
  LossGrad a = loss_and_grad(spec, params, batch);
  LossGrad b = loss_and_grad(spec, params, batch);
  EXPECT_EQ(a.loss, b.loss);
  for (std::size_t i = 0; i < a.grads.size(); ++i)
    EXPECT_EQ(a.grads.entry(i).value.data, b.grads.entry(i).value.data);
}

TEST(LossAndGrad, ValidationErrors) {
  MlpSpec spec;
  spec.layer_sizes = {3, 2};
  spec.seed = 1;
  ParamSet params = init_params(spec);
  Rng rng(2);
  Batch wrong_width = random_classification_batch(rng, 4, 5, 2);
  EXPECT_THROW(loss_and_grad(spec, params, wrong_width), ShapeError);

  Batch regression;
  regression.features = rng.normal_tensor({4, 3});
  regression.targets = rng.normal_tensor({4, 2});
  EXPECT_THROW(loss_and_grad(spec, params, regression), ValidationError);

  spec.loss = LossKind::kMse;
  EXPECT_NO_THROW(loss_and_grad(spec, params, regression));
}

TEST(Evaluate, PerfectSeparator) {
  // Hand-built logits: class = sign of x0.
  MlpSpec spec;
  spec.layer_sizes = {1, 2};
  spec.seed = 0;
  ParamSet p = init_params(spec);
  p.value("W0") = Tensor::matrix(2, 1, {-1.0, 1.0});
  p.value("b0") = Tensor::vec({0.0, 0.0});
  Dataset d;
  d.features = Tensor::matrix(2, 1, {-3.0, 2.0});
  d.labels = {0, 1};
  EvalResult res = evaluate(spec, p, d);
  ASSERT_TRUE(res.accuracy.has_value());
  EXPECT_DOUBLE_EQ(*res.accuracy, 1.0);
}

TEST(Evaluate, ConstantPredictorOnRandomBalancedLabels) {
  // Zero weights predict class 0 for every row (argmax tie -> lowest index).
  MlpSpec spec;
  spec.layer_sizes = {2, 2};
  spec.seed = 0;
  ParamSet p = init_params(spec);
  for (auto& e : p) e.value = Tensor::zeros(e.value.shape);

  const std::size_t n = 400;
  double sum_acc = 0.0;
  const int trials = 30;
  for (int t = 0; t < trials; ++t) {
    Rng rng(1000 + t);
    Dataset d;
    d.features = rng.normal_tensor({n, 2});
    for (std::size_t i = 0; i < n; ++i)
      d.labels.push_back(static_cast<int>(rng.next_u64() % 2));
    EvalResult res = evaluate(spec, p, d);
    sum_acc += *res.accuracy;
  }
  double mean = sum_acc / trials;
  // 4-sigma binomial band around 0.5.
  double sigma = std::sqrt(0.25 / (n * trials));
  EXPECT_NEAR(mean, 0.5, 4.0 * sigma);
}

TEST(Evaluate, RowOrderInvariance) {
  MlpSpec spec;
  spec.layer_sizes = {2, 5, 3};
  spec.seed = 21;
  ParamSet p = init_params(spec);
  Rng rng(22);
  Dataset d;
  d.features = rng.normal_tensor({10, 2});
  for (int i = 0; i < 10; ++i) d.labels.push_back(static_cast<int>(rng.next_u64() % 3));

  std::vector<std::size_t> reversed;
  for (std::size_t i = 10; i-- > 0;) reversed.push_back(i);
  Dataset rev = d.subset(reversed);

  EvalResult a = evaluate(spec, p, d);
  EvalResult b = evaluate(spec, p, rev);
  EXPECT_NEAR(a.mean_loss, b.mean_loss, 1e-14);
  EXPECT_DOUBLE_EQ(*a.accuracy, *b.accuracy);
}

TEST(Evaluate, EmptyDatasetRejected) {
  MlpSpec spec;
  spec.layer_sizes = {2, 2};
  spec.seed = 0;
  ParamSet p = init_params(spec);
  Dataset empty;
  empty.features = Tensor::zeros({0, 2});
  EXPECT_THROW(evaluate(spec, p, empty), ValidationError);
}

TEST(Evaluate, ArgmaxTieBreaksTowardLowestIndex) {
  MlpSpec spec;
  spec.layer_sizes = {1, 3};
  spec.seed = 0;
  ParamSet p = init_params(spec);
  for (auto& e : p) e.value = Tensor::zeros(e.value.shape);
  Dataset d;
  d.features = Tensor::matrix(2, 1, {1.0, -1.0});
  d.labels = {0, 2};
  EvalResult res = evaluate(spec, p, d);
  // All logits equal: predicted class 0 for both rows; only row 0 matches.
  EXPECT_DOUBLE_EQ(*res.accuracy, 0.5);
}
