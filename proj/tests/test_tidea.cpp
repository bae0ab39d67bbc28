#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "idea/error.hpp"
#include "idea/fileio.hpp"
#include "idea/hypersearch.hpp"
#include "idea/tidea.hpp"
#include "expect_error.hpp"
#include "test_support.hpp"

namespace idea {
namespace {

using testing::Bench;
using testing::CodeOf;
using testing::MakeBench;
using testing::RandomCache;
using testing::RandomHead;
using testing::RandomMatrix;
using testing::RandomUnit;
using testing::RandomUnitRows;
using testing::ReferenceLogits;
using testing::RelativeError;
using testing::ReferenceLoss;
using testing::TempDir;

TEST(TideaLogitsTest, ZeroStateEqualsTrainingFreeAdapter) {
  std::mt19937_64 rng(30);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 6, k = 1 + rng() % 4, d = 2 + rng() % 12;
    const auto cache = RandomCache(rng, n, k, d);
    const auto head = RandomHead(rng, n, d);
    const auto x = RandomUnit(rng, d);
    const FusionConfig config{.alpha = (rng() % 11) / 10.0, .beta = 2.5, .theta = 1.5};
    const auto state = TrainableState::Zero(n * k, d);
    EXPECT_EQ(TideaLogits(cache, head, state, x, config), IdeaLogits(cache, head, x, config));
  }
}

TEST(TideaLogitsTest, DisabledComponentsEqualTrainingFreeAdapter) {
  std::mt19937_64 rng(31);
  const auto cache = RandomCache(rng, 4, 3, 8);
  const auto head = RandomHead(rng, 4, 8);
  TrainableState state{RandomMatrix(rng, 8, 8, 0.5), RandomMatrix(rng, 12, 8, 0.5), false, false};
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = RandomUnit(rng, 8);
    EXPECT_EQ(TideaLogits(cache, head, state, x, {}), IdeaLogits(cache, head, x, {}));
  }
}

TEST(TideaLogitsTest, IdentityProjectionDoublesCaptionTerm) {
  std::mt19937_64 rng(32);
  const auto cache = RandomCache(rng, 3, 2, 6);
  const auto head = RandomHead(rng, 3, 6);
  const TrainableState state{Matrix::Identity(6), Matrix(6, 6), true, false};
  const FusionConfig config{.alpha = 0.4, .beta = 2.0, .theta = 2.0};
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = RandomUnit(rng, 6);
    const auto got = TideaLogits(cache, head, state, x, config);
    // Hand form: s = (1 - a) Sim_I + 2 a Sim_T.
    const auto sims = Similarities(cache, x);
    const auto zs = ZeroShotLogits(head, x);
    for (std::size_t i = 0; i < 3; ++i) {
      double few = 0.0;
      for (std::size_t j = 0; j < 2; ++j) {
        const std::size_t r = i * 2 + j;
        const double s = 0.6 * sims.sim_image[r] + 0.8 * sims.sim_text[r];
        few += std::exp(2.0 * (s - 1.0));
      }
      EXPECT_NEAR(got[i], 2.0 * few + zs[i], 1e-9);
    }
    const auto ref = ReferenceLogits(cache, head, &state.w_proj, nullptr, x, 0.4, 2.0, 2.0);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], ref[i], 1e-6);
  }
}

TEST(TideaLogitsTest, RandomStatesMatchReference) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 5, k = 1 + rng() % 4, d = 1 + rng() % 10;
    const auto cache = RandomCache(rng, n, k, d);
    const auto head = RandomHead(rng, n, d);
    const TrainableState state{RandomMatrix(rng, d, d, 0.3), RandomMatrix(rng, n * k, d, 0.3),
                               true, true};
    const auto x = RandomUnit(rng, d);
    const FusionConfig config{.alpha = 0.5, .beta = 1.5, .theta = 2.0};
    const auto got = TideaLogits(cache, head, state, x, config);
    const auto ref =
        ReferenceLogits(cache, head, &state.w_proj, &state.e_bias, x, 0.5, 1.5, 2.0);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got[i], ref[i], 1e-6);
  }
}

TEST(TideaLogitsTest, StateShapeAndFinitenessChecked) {
  std::mt19937_64 rng(34);
  const auto cache = RandomCache(rng, 2, 2, 4);
  const auto head = RandomHead(rng, 2, 4);
  const auto x = RandomUnit(rng, 4);
  EXPECT_EQ(CodeOf([&] { TideaLogits(cache, head, TrainableState::Zero(4, 3), x, {}); }),
            ErrorCode::kShape);
  auto state = TrainableState::Zero(4, 4);
  state.e_bias(1, 2) = std::nan("");
  EXPECT_EQ(CodeOf([&] { TideaLogits(cache, head, state, x, {}); }),
            ErrorCode::kStateCorruption);
  auto inf_state = TrainableState::Zero(4, 4);
  inf_state.w_proj(0, 0) = INFINITY;
  EXPECT_EQ(CodeOf([&] { inf_state.CheckFinite(); }), ErrorCode::kStateCorruption);
}

TEST(LossTest, UniformLogitsGiveLogN) {
  // beta = 0 and a test feature orthogonal to every prototype: all logits 0.
  const std::size_t n = 4;
  const EmbeddingMatrix protos(n, 5, {1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0},
                               true);
  const ZeroShotHead head(protos, {"a", "b", "c", "d"});
  std::mt19937_64 rng(35);
  const auto cache = RandomCache(rng, n, 2, 5);
  const EmbeddingMatrix batch(1, 5, {0, 0, 0, 0, 1}, true);
  const std::vector<std::size_t> labels = {2};
  const auto out = LossAndGrads(cache, head, TrainableState::Zero(8, 5), batch, labels,
                                {.alpha = 0.5, .beta = 0.0, .theta = 2.0});
  EXPECT_NEAR(out.loss, std::log(4.0), 1e-12);
  EXPECT_TRUE(out.grad_w.IsZero());
  EXPECT_TRUE(out.grad_e.IsZero());
}

TEST(LossTest, LossMatchesReference) {
  std::mt19937_64 rng(36);
  const auto cache = RandomCache(rng, 3, 2, 6);
  const auto head = RandomHead(rng, 3, 6);
  const TrainableState state{RandomMatrix(rng, 6, 6, 0.2), RandomMatrix(rng, 6, 6, 0.2), true,
                             true};
  const auto batch = RandomUnitRows(rng, 5, 6);
  const std::vector<std::size_t> labels = {0, 1, 2, 1, 0};
  const auto out = LossAndGrads(cache, head, state, batch, labels, {});
  EXPECT_NEAR(out.loss,
              ReferenceLoss(cache, head, &state.w_proj, &state.e_bias, batch, labels, 0.5, 2.75,
                            2.0),
              1e-6);
}

TEST(LossTest, RejectsBadLabels) {
  std::mt19937_64 rng(37);
  const auto cache = RandomCache(rng, 2, 1, 3);
  const auto head = RandomHead(rng, 2, 3);
  const auto batch = RandomUnitRows(rng, 2, 3);
  const std::vector<std::size_t> bad = {0, 2};
  EXPECT_EQ(CodeOf([&] {
              LossAndGrads(cache, head, TrainableState::Zero(2, 3), batch, bad, {});
            }),
            ErrorCode::kLabel);
  const std::vector<std::size_t> short_labels = {0};
  EXPECT_EQ(CodeOf([&] {
              LossAndGrads(cache, head, TrainableState::Zero(2, 3), batch, short_labels, {});
            }),
            ErrorCode::kShape);
}

struct GradCheckCase {
  bool proj;
  bool bias;
};

class GradientCheckTest : public ::testing::TestWithParam<GradCheckCase> {};

// Central differences of the reference loss against the analytic gradient.
TEST_P(GradientCheckTest, AnalyticMatchesFiniteDifference) {
  const auto flags = GetParam();
  std::mt19937_64 rng(38 + flags.proj * 2 + flags.bias);
  const std::size_t n = 3, k = 2, d = 5;
  const auto cache = RandomCache(rng, n, k, d);
  const auto head = RandomHead(rng, n, d);
  TrainableState state{RandomMatrix(rng, d, d, 0.2), RandomMatrix(rng, n * k, d, 0.2),
                       flags.proj, flags.bias};
  const auto batch = RandomUnitRows(rng, 6, d);
  const std::vector<std::size_t> labels = {0, 1, 2, 0, 1, 2};
  const FusionConfig config{.alpha = 0.6, .beta = 1.5, .theta = 2.0};
  const auto grads = LossAndGrads(cache, head, state, batch, labels, config);

  const double h = 1e-3;
  auto loss_at = [&](const TrainableState& s) {
    return ReferenceLoss(cache, head, s.enable_proj ? &s.w_proj : nullptr,
                         s.enable_bias ? &s.e_bias : nullptr, batch, labels, config.alpha,
                         config.beta, config.theta);
  };
  auto check = [&](Matrix TrainableState::*member, const Matrix& analytic, bool enabled) {
    if (!enabled) {
      EXPECT_TRUE(analytic.IsZero());
      return;
    }
    for (int probe = 0; probe < 20; ++probe) {
      const std::size_t idx = rng() % analytic.data().size();
      TrainableState plus = state, minus = state;
      (plus.*member).data()[idx] += h;
      (minus.*member).data()[idx] -= h;
      const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
      const double exact = analytic.data()[idx];
      EXPECT_LE(RelativeError(numeric, exact), 1e-4)
          << "entry " << idx << " numeric " << numeric << " analytic " << exact;
    }
  };
  check(&TrainableState::w_proj, grads.grad_w, flags.proj);
  check(&TrainableState::e_bias, grads.grad_e, flags.bias);
}

INSTANTIATE_TEST_SUITE_P(AllComponentFlags, GradientCheckTest,
                         ::testing::Values(GradCheckCase{false, false}, GradCheckCase{false, true},
                                           GradCheckCase{true, false}, GradCheckCase{true, true}));

TEST(SgdTest, ZeroGradientsLeaveStateUnchanged) {
  std::mt19937_64 rng(40);
  const TrainableState state{RandomMatrix(rng, 4, 4, 1.0), RandomMatrix(rng, 6, 4, 1.0), true,
                             true};
  const LossGrads zero{0.0, Matrix(4, 4), Matrix(6, 4)};
  EXPECT_EQ(SgdStep(state, zero, 0.5), state);
}

TEST(SgdTest, IdentityGradientStep) {
  const auto state = TrainableState::Zero(2, 3);
  const LossGrads grads{0.0, Matrix::Identity(3), Matrix(2, 3)};
  const auto next = SgdStep(state, grads, 0.1);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) EXPECT_DOUBLE_EQ(next.w_proj(a, b), a == b ? -0.1 : 0.0);
  }
  EXPECT_TRUE(next.e_bias.IsZero());
}

TEST(SgdTest, TwoHalfStepsEqualOneStep) {
  std::mt19937_64 rng(41);
  const TrainableState state{RandomMatrix(rng, 3, 3, 1.0), RandomMatrix(rng, 4, 3, 1.0), true,
                             true};
  const LossGrads grads{0.0, RandomMatrix(rng, 3, 3, 1.0), RandomMatrix(rng, 4, 3, 1.0)};
  const auto once = SgdStep(state, grads, 0.2);
  const auto twice = SgdStep(SgdStep(state, grads, 0.1), grads, 0.1);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(once.w_proj.data()[i], twice.w_proj.data()[i], 1e-12);
  }
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_NEAR(once.e_bias.data()[i], twice.e_bias.data()[i], 1e-12);
  }
}

TEST(SgdTest, DisabledComponentIsFrozen) {
  std::mt19937_64 rng(42);
  const auto state = TrainableState::Zero(4, 3, false, true);
  const LossGrads grads{0.0, RandomMatrix(rng, 3, 3, 1.0), RandomMatrix(rng, 4, 3, 1.0)};
  const auto next = SgdStep(state, grads, 0.3);
  EXPECT_TRUE(next.w_proj.IsZero());
  EXPECT_FALSE(next.e_bias.IsZero());
  EXPECT_EQ(CodeOf([&] { SgdStep(state, grads, 0.0); }), ErrorCode::kInput);
}

TEST(SgdTest, OverflowIsDivergence) {
  const auto state = TrainableState::Zero(1, 1);
  Matrix huge(1, 1);
  huge(0, 0) = 1e308;
  const LossGrads grads{0.0, huge, huge};
  EXPECT_EQ(CodeOf([&] { SgdStep(state, grads, 1e10); }), ErrorCode::kDivergence);
}

TEST(LrScheduleTest, CosineDecaysFromBaseRate) {
  TrainConfig config;
  config.learning_rate = 0.1;
  EXPECT_DOUBLE_EQ(config.LearningRateAt(0, 100), 0.1);
  EXPECT_NEAR(config.LearningRateAt(50, 100), 0.05, 1e-15);
  EXPECT_NEAR(config.LearningRateAt(100, 100), 0.0, 1e-15);
  config.lr_schedule = LrSchedule::kConstant;
  EXPECT_DOUBLE_EQ(config.LearningRateAt(73, 100), 0.1);
  EXPECT_EQ(ParseLrSchedule("cosine"), LrSchedule::kCosine);
  EXPECT_EQ(CodeOf([] { ParseLrSchedule("step"); }), ErrorCode::kInput);
}

class TrainTest : public ::testing::Test {
 protected:
  static Bench SmallBench(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_classes = 5;
    spec.dim = 16;
    spec.train_per_class = 4;
    spec.val_per_class = 10;
    spec.test_size = 50;
    spec.seed = seed;
    return MakeBench(spec);
  }
};

TEST_F(TrainTest, ZeroLearningRateKeepsZeroState) {
  const auto bench = SmallBench(1);
  TrainConfig config;
  config.epochs = 1;
  config.learning_rate = 0.0;
  const auto result = Train(bench.cache, bench.head, bench.cache.images(), bench.cache.labels(),
                            bench.val_features, bench.val_labels, {}, config);
  EXPECT_EQ(result.state, TrainableState::Zero(bench.cache.rows(), bench.cache.dim()));
  ASSERT_EQ(result.history.size(), 1u);
  EXPECT_EQ(result.best_epoch, 1u);
  EXPECT_DOUBLE_EQ(result.best_val_accuracy,
                   EvaluateConfig(bench.cache, bench.head, bench.val_features, bench.val_labels,
                                  {}));
}

TEST_F(TrainTest, SameSeedSameResult) {
  const auto bench = SmallBench(2);
  TrainConfig config;
  config.epochs = 8;
  config.batch_size = 7;
  config.learning_rate = 0.5;
  config.seed = 99;
  const auto a = Train(bench.cache, bench.head, bench.cache.images(), bench.cache.labels(),
                       bench.val_features, bench.val_labels, {}, config);
  const auto b = Train(bench.cache, bench.head, bench.cache.images(), bench.cache.labels(),
                       bench.val_features, bench.val_labels, {}, config);
  EXPECT_EQ(a.state, b.state);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].val_accuracy, b.history[e].val_accuracy);
  }
  EXPECT_EQ(a.best_epoch, b.best_epoch);
}

TEST_F(TrainTest, EmptyOrMismatchedTrainingSetRejected) {
  const auto bench = SmallBench(3);
  const std::vector<std::size_t> none;
  EXPECT_EQ(CodeOf([&] {
              Train(bench.cache, bench.head, bench.cache.images(), none, bench.val_features,
                    bench.val_labels, {}, TrainConfig{});
            }),
            ErrorCode::kInput);
  const std::vector<std::size_t> one = {0};
  EXPECT_EQ(CodeOf([&] {
              Train(bench.cache, bench.head, bench.cache.images(), one, bench.val_features,
                    bench.val_labels, {}, TrainConfig{});
            }),
            ErrorCode::kShape);
}

TEST_F(TrainTest, BothComponentsOffIsTrainingFree) {
  const auto bench = SmallBench(4);
  TrainConfig config;
  config.learning_rate = 1.0;
  const auto result = Train(bench.cache, bench.head, bench.cache.images(), bench.cache.labels(),
                            bench.val_features, bench.val_labels, {}, config, false, false);
  EXPECT_TRUE(result.history.empty());
  EXPECT_TRUE(result.state.w_proj.IsZero());
  EXPECT_TRUE(result.state.e_bias.IsZero());
}

TEST_F(TrainTest, SeparableBenchmarkReachesHighValidationAccuracy) {
  const auto bench = MakeBench(SyntheticSpec{});
  const auto result = Train(bench.cache, bench.head, bench.cache.images(), bench.cache.labels(),
                            bench.val_features, bench.val_labels, {}, TrainConfig{});
  EXPECT_GE(result.best_val_accuracy, 0.95);
  EXPECT_GE(result.best_epoch, 1u);
  EXPECT_EQ(result.history.size(), 50u);
}

// Five-epoch moving mean of the training loss never rises for small rates.
TEST_F(TrainTest, WindowedLossNonIncreasingAtSmallRates) {
  const auto bench = MakeBench(SyntheticSpec{});
  for (double lr : {1e-3, 5e-4}) {
    TrainConfig config;
    config.learning_rate = lr;
    const auto result = Train(bench.cache, bench.head, bench.cache.images(),
                              bench.cache.labels(), bench.val_features, bench.val_labels, {},
                              config);
    std::vector<double> window;
    for (std::size_t e = 0; e + 5 <= result.history.size(); ++e) {
      double sum = 0.0;
      for (std::size_t w = 0; w < 5; ++w) sum += result.history[e + w].train_loss;
      window.push_back(sum / 5.0);
    }
    for (std::size_t i = 1; i < window.size(); ++i) {
      EXPECT_LE(window[i], window[i - 1] + 1e-12) << "lr " << lr << " window " << i;
    }
  }
}

// Switching a component on never costs more than half a point of best
// validation accuracy relative to the same run with it off.
TEST_F(TrainTest, EnablingComponentsDoesNotHurtValidation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const auto bench = MakeBench(spec);
    auto best = [&](bool proj, bool bias) {
      return Train(bench.cache, bench.head, bench.cache.images(), bench.cache.labels(),
                   bench.val_features, bench.val_labels, {}, TrainConfig{}, proj, bias)
          .best_val_accuracy;
    };
    const double none = best(false, false);
    const double proj = best(true, false);
    const double bias = best(false, true);
    const double both = best(true, true);
    EXPECT_GE(proj, none - 0.005) << "seed " << seed;
    EXPECT_GE(bias, none - 0.005) << "seed " << seed;
    EXPECT_GE(both, proj - 0.005) << "seed " << seed;
    EXPECT_GE(both, bias - 0.005) << "seed " << seed;
  }
}

TEST(CheckpointTest, RoundTripToSinglePrecision) {
  std::mt19937_64 rng(43);
  Checkpoint checkpoint;
  checkpoint.state = {RandomMatrix(rng, 5, 5, 0.1), RandomMatrix(rng, 6, 5, 0.1), true, false};
  checkpoint.fusion = {.alpha = 0.2, .beta = 3.0, .theta = 1.5};
  checkpoint.train.learning_rate = 0.01;
  checkpoint.train.lr_schedule = LrSchedule::kConstant;
  checkpoint.epoch = 17;
  checkpoint.val_accuracy = 0.875;
  TempDir dir("ckpt");
  SaveCheckpoint(checkpoint, dir.path() / "run");
  const auto loaded = LoadCheckpoint(dir.path() / "run");
  EXPECT_EQ(loaded.fusion, checkpoint.fusion);
  EXPECT_EQ(loaded.train, checkpoint.train);
  EXPECT_EQ(loaded.epoch, 17u);
  EXPECT_EQ(loaded.val_accuracy, 0.875);
  EXPECT_TRUE(loaded.state.enable_proj);
  EXPECT_FALSE(loaded.state.enable_bias);
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(loaded.state.w_proj.data()[i],
              static_cast<double>(static_cast<float>(checkpoint.state.w_proj.data()[i])));
  }
  EXPECT_EQ(loaded.state.e_bias.rows(), 6u);
}

TEST(CheckpointTest, MissingOrCorruptFilesRejected) {
  TempDir dir("ckpt");
  EXPECT_EQ(CodeOf([&] { LoadCheckpoint(dir.path()); }), ErrorCode::kIo);
  Checkpoint checkpoint;
  checkpoint.state = TrainableState::Zero(2, 2);
  SaveCheckpoint(checkpoint, dir.path());
  WriteFileAtomic(dir.path() / "checkpoint.json", std::string("{\"fusion\": 1}"));
  EXPECT_EQ(CodeOf([&] { LoadCheckpoint(dir.path()); }), ErrorCode::kFormat);
}

}  // namespace
}  // namespace idea
