#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "idea/error.hpp"
#include "idea/hypersearch.hpp"
#include "idea/serialization.hpp"
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
using testing::RandomUnitRows;

class HyperSearchTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { bench_ = new Bench(MakeBench(SyntheticSpec{})); }
  static void TearDownTestSuite() {
    delete bench_;
    bench_ = nullptr;
  }
  static const Bench& bench() { return *bench_; }

 private:
  static Bench* bench_;
};

Bench* HyperSearchTest::bench_ = nullptr;

TEST(GridSpecTest, DefaultGridShape) {
  const auto grid = GridSpec::Default();
  EXPECT_EQ(grid.alphas, (std::vector<double>{0, 0.2, 0.4, 0.5, 0.8, 1.0}));
  EXPECT_EQ(grid.betas, (std::vector<double>{0, 1, 2, 2.5, 2.75, 3}));
  EXPECT_EQ(grid.thetas, (std::vector<double>{0.5, 1, 1.5, 2, 3, 3.5}));
  EXPECT_EQ(grid.size(), 216u);
}

TEST(GridSpecTest, JsonRoundTripAndValidation) {
  const GridSpec grid{{0.1, 0.9}, {1.0}, {2.0, 4.0}};
  const auto back = nlohmann::json(grid).get<GridSpec>();
  EXPECT_EQ(back.alphas, grid.alphas);
  EXPECT_EQ(back.thetas, grid.thetas);
  EXPECT_EQ(CodeOf([] { GridSpec{{}, {1.0}, {1.0}}.Validate(); }), ErrorCode::kInput);
  EXPECT_EQ(CodeOf([] { GridSpec{{1.2}, {1.0}, {1.0}}.Validate(); }), ErrorCode::kInput);
  EXPECT_EQ(CodeOf([] { GridSpec{{0.5}, {1.0}, {0.0}}.Validate(); }), ErrorCode::kInput);
}

TEST_F(HyperSearchTest, SingletonGridReturnsItsOnlyConfig) {
  const GridSpec grid{{0.3}, {1.25}, {2.5}};
  const auto result =
      GridSearch(bench().cache, bench().head, bench().val_features, bench().val_labels, grid);
  const FusionConfig only{.alpha = 0.3, .beta = 1.25, .theta = 2.5};
  EXPECT_EQ(result.best, only);
  ASSERT_EQ(result.table.size(), 1u);
  EXPECT_EQ(result.best_accuracy,
            EvaluateConfig(bench().cache, bench().head, bench().val_features, bench().val_labels,
                           only));
}

TEST_F(HyperSearchTest, FewShotKnowledgeBeatsZeroShot) {
  const GridSpec grid{{0.5}, {0.0, 2.75}, {2.0}};
  const auto result =
      GridSearch(bench().cache, bench().head, bench().val_features, bench().val_labels, grid);
  EXPECT_EQ(result.best.beta, 2.75);
  EXPECT_GT(result.table[0].accuracy, result.table[1].accuracy);
}

TEST_F(HyperSearchTest, DefaultGridSelectsPositiveBeta) {
  const auto result = GridSearch(bench().cache, bench().head, bench().val_features,
                                 bench().val_labels, GridSpec::Default());
  EXPECT_GT(result.best.beta, 0.0);
  EXPECT_EQ(result.table.size(), 216u);
}

// Every table row agrees exactly with a direct evaluation; the table is
// sorted by accuracy and then by (alpha, beta, theta).
TEST_F(HyperSearchTest, TableMatchesDirectEvaluationAndOrdering) {
  const GridSpec grid{{0.0, 0.5, 1.0}, {0.0, 1.0, 3.0}, {0.5, 3.5}};
  const auto result =
      GridSearch(bench().cache, bench().head, bench().val_features, bench().val_labels, grid);
  ASSERT_EQ(result.table.size(), grid.size());
  for (const auto& row : result.table) {
    EXPECT_EQ(row.accuracy, EvaluateConfig(bench().cache, bench().head, bench().val_features,
                                           bench().val_labels, row.config));
  }
  for (std::size_t i = 1; i < result.table.size(); ++i) {
    const auto& a = result.table[i - 1];
    const auto& b = result.table[i];
    const auto key = [](const GridRow& r) {
      return std::make_tuple(-static_cast<long>(r.correct), r.config.alpha, r.config.beta,
                             r.config.theta);
    };
    EXPECT_LT(key(a), key(b));
  }
  EXPECT_EQ(result.best, result.table.front().config);
  const double top = std::max_element(result.table.begin(), result.table.end(),
                                      [](const GridRow& a, const GridRow& b) {
                                        return a.accuracy < b.accuracy;
                                      })->accuracy;
  EXPECT_EQ(result.best_accuracy, top);
}

TEST_F(HyperSearchTest, TrainedStateSearchMatchesDirectEvaluation) {
  std::mt19937_64 rng(50);
  const TrainableState state{RandomMatrix(rng, bench().cache.dim(), bench().cache.dim(), 0.05),
                             RandomMatrix(rng, bench().cache.rows(), bench().cache.dim(), 0.05),
                             true, true};
  const GridSpec grid{{0.2, 0.8}, {1.0, 2.5}, {1.0}};
  const auto result = GridSearch(bench().cache, bench().head, bench().val_features,
                                 bench().val_labels, grid, &state);
  for (const auto& row : result.table) {
    EXPECT_EQ(row.accuracy, EvaluateConfig(bench().cache, bench().head, bench().val_features,
                                           bench().val_labels, row.config, &state));
  }
}

TEST(GridSearchTest, DeterministicAcrossRuns) {
  std::mt19937_64 rng(51);
  const auto cache = RandomCache(rng, 4, 3, 8);
  const auto head = RandomHead(rng, 4, 8);
  const auto val = RandomUnitRows(rng, 40, 8);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 40; ++i) labels.push_back(i % 4);
  const auto a = GridSearch(cache, head, val, labels, GridSpec::Default());
  const auto b = GridSearch(cache, head, val, labels, GridSpec::Default());
  EXPECT_EQ(GridTableCsv(a.table), GridTableCsv(b.table));
  EXPECT_EQ(GridTableJson(a), GridTableJson(b));
}

// With every config tied, the lexicographically smallest wins.
TEST(GridSearchTest, TiesGoToSmallestConfig) {
  std::mt19937_64 rng(52);
  const auto cache = RandomCache(rng, 1, 2, 4);
  const auto head = RandomHead(rng, 1, 4);
  const auto val = RandomUnitRows(rng, 5, 4);
  const std::vector<std::size_t> labels(5, 0);
  const auto result = GridSearch(cache, head, val, labels, {{0.9, 0.1}, {2.0, 1.0}, {3.0}});
  const FusionConfig smallest{.alpha = 0.1, .beta = 1.0, .theta = 3.0};
  EXPECT_EQ(result.best, smallest);
  EXPECT_EQ(result.best_accuracy, 1.0);
}

TEST(GridSearchTest, RejectsEmptyGridAndValidation) {
  std::mt19937_64 rng(53);
  const auto cache = RandomCache(rng, 2, 2, 4);
  const auto head = RandomHead(rng, 2, 4);
  const auto val = RandomUnitRows(rng, 2, 4);
  const std::vector<std::size_t> labels = {0, 1};
  EXPECT_EQ(CodeOf([&] { GridSearch(cache, head, val, labels, {{}, {1.0}, {1.0}}); }),
            ErrorCode::kInput);
  const std::vector<std::size_t> none;
  EXPECT_EQ(CodeOf([&] { GridSearch(cache, head, val, none, GridSpec::Default()); }),
            ErrorCode::kInput);
  const std::vector<std::size_t> one = {0};
  EXPECT_EQ(CodeOf([&] { GridSearch(cache, head, val, one, GridSpec::Default()); }),
            ErrorCode::kShape);
}

TEST_F(HyperSearchTest, CoordinateSweepHasSixRowsPerParameter) {
  const FusionConfig anchor;
  const auto rows = CoordinateSweep(bench().cache, bench().head, bench().val_features,
                                    bench().val_labels, GridSpec::Default(), anchor);
  ASSERT_EQ(rows.size(), 18u);
  const auto grid = GridSpec::Default();
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(rows[i].parameter, SweptParameter::kAlpha);
    EXPECT_EQ(rows[i].config.alpha, grid.alphas[i]);
    EXPECT_EQ(rows[i].config.beta, anchor.beta);
    EXPECT_EQ(rows[6 + i].parameter, SweptParameter::kBeta);
    EXPECT_EQ(rows[6 + i].config.beta, grid.betas[i]);
    EXPECT_EQ(rows[6 + i].config.theta, anchor.theta);
    EXPECT_EQ(rows[12 + i].parameter, SweptParameter::kTheta);
    EXPECT_EQ(rows[12 + i].config.theta, grid.thetas[i]);
    EXPECT_EQ(rows[12 + i].config.alpha, anchor.alpha);
  }
  for (const auto& row : rows) {
    EXPECT_EQ(row.accuracy, EvaluateConfig(bench().cache, bench().head, bench().val_features,
                                           bench().val_labels, row.config));
  }
}

TEST_F(HyperSearchTest, TableEmitters) {
  const GridSpec grid{{0.5}, {0.0, 1.0}, {2.0}};
  const auto result =
      GridSearch(bench().cache, bench().head, bench().val_features, bench().val_labels, grid);
  const auto csv = GridTableCsv(result.table);
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "alpha,beta,theta,correct,accuracy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  const auto json = nlohmann::json::parse(GridTableJson(result));
  EXPECT_EQ(json.at("table").size(), 2u);
  EXPECT_EQ(json.at("best").get<FusionConfig>(), result.best);
  EXPECT_EQ(json.at("best_accuracy").get<double>(), result.best_accuracy);

  const auto sweep = CoordinateSweep(bench().cache, bench().head, bench().val_features,
                                     bench().val_labels, grid, FusionConfig{});
  const auto sweep_csv = SweepTableCsv(sweep);
  EXPECT_EQ(sweep_csv.rfind("parameter,value,alpha,beta,theta,correct,accuracy\n", 0), 0u);
  EXPECT_EQ(std::count(sweep_csv.begin(), sweep_csv.end(), '\n'), 5);
  EXPECT_NE(sweep_csv.find("\nbeta,0,"), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(SweepTableJson(sweep)).size(), 4u);
}

}  // namespace
}  // namespace idea
