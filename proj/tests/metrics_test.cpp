// Copyright 2026 The lid-crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "lid/error.hpp"
#include "lid/metrics.hpp"

namespace lid {
namespace {

TEST(Metrics, AllCorrectIsDiagonal) {
  std::vector<int> y = {0, 1, 2, 1, 0};
  auto r = report_from_predictions({"a", "b", "c"}, y, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.total, 5);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) EXPECT_EQ(r.confusion[i][j], 0);
    }
  }
  EXPECT_EQ(r.macro_f1, 1.0);
}

TEST(Metrics, TwoByTwoFormulas) {
  // Class A: TP 2, FP 1, FN 1.
  std::vector<int> truth = {0, 0, 0, 1, 1};
  std::vector<int> pred = {0, 0, 1, 0, 1};
  auto r = report_from_predictions({"A", "B"}, truth, pred);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 2.0 / 3.0);

  auto c = report_from_confusion({"A", "B"}, {{3, 1}, {0, 4}});
  EXPECT_DOUBLE_EQ(c.accuracy, 7.0 / 8.0);
  EXPECT_DOUBLE_EQ(c.per_class[0].recall, 0.75);
  EXPECT_DOUBLE_EQ(c.per_class[0].precision, 1.0);
}

TEST(Metrics, NeverPredictedClassHasZeroPrecision) {
  auto r = report_from_confusion({"A", "B"}, {{2, 0}, {3, 0}});
  EXPECT_EQ(r.per_class[1].precision, 0.0);
  EXPECT_EQ(r.per_class[1].recall, 0.0);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
}

TEST(Metrics, MacroF1IsInvariantUnderRelabeling) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<int> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(cls(rng));
    pred.push_back(cls(rng) == 0 ? cls(rng) : truth.back());
  }
  const std::vector<int> perm = {2, 0, 3, 1};
  std::vector<int> pt, pp;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    pt.push_back(perm[truth[i]]);
    pp.push_back(perm[pred[i]]);
  }
  auto a = report_from_predictions({"a", "b", "c", "d"}, truth, pred);
  auto b = report_from_predictions({"b", "d", "a", "c"}, pt, pp);
  EXPECT_NEAR(a.macro_f1, b.macro_f1, 1e-15);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(a.per_class[c].f1, b.per_class[perm[c]].f1);
}

TEST(Metrics, MergeSumsConfusion) {
  auto a = report_from_confusion({"x", "y"}, {{1, 2}, {3, 4}});
  auto b = report_from_confusion({"x", "y"}, {{5, 0}, {0, 1}});
  auto m = merge_reports(a, b);
  EXPECT_EQ(m.confusion, (std::vector<std::vector<std::int64_t>>{{6, 2}, {3, 5}}));
  EXPECT_EQ(merge_reports(a, b).confusion, merge_reports(b, a).confusion);
}

TEST(Metrics, RejectsBadInput) {
  std::vector<int> t = {0, 2};
  std::vector<int> p = {0, 1};
  EXPECT_THROW(report_from_predictions({"a", "b"}, t, p), DataError);
  EXPECT_THROW(report_from_confusion({"a", "b"}, {{1, 2}}), ShapeError);
}

TEST(Metrics, OutputsAreConsistent) {
  auto r = report_from_confusion({"en", "de"}, {{3, 1}, {0, 4}});
  auto j = report_to_json(r);
  EXPECT_EQ(j["accuracy"].get<double>(), r.accuracy);
  EXPECT_EQ(j["confusion"][0][1].get<int>(), 1);
  EXPECT_EQ(confusion_csv(r), "true\\predicted,en,de\nen,3,1\nde,0,4\n");
  const auto table = format_report(r);
  EXPECT_NE(table.find("accuracy 0.8750"), std::string::npos);
  EXPECT_NE(table.find("macro"), std::string::npos);
}

}  // namespace
}  // namespace lid
