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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace lid {

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;    // true count
  std::int64_t predicted = 0;  // predicted count
};

// confusion[i][j] counts samples of true class i predicted as class j.
// A class that is never predicted has precision 0; one that never occurs has
// recall 0; F1 is 0 whenever precision + recall is 0.
struct EvalReport {
  std::vector<std::string> labels;
  std::vector<std::vector<std::int64_t>> confusion;
  std::int64_t total = 0;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

EvalReport report_from_confusion(std::vector<std::string> labels, std::vector<std::vector<std::int64_t>> confusion);
EvalReport report_from_predictions(std::vector<std::string> labels, std::span<const int> truth,
                                   std::span<const int> predicted);
// Elementwise sum of the confusion matrices.
EvalReport merge_reports(const EvalReport& a, const EvalReport& b);

nlohmann::json report_to_json(const EvalReport& report);
// Header row of predicted labels, one row per true label.
std::string confusion_csv(const EvalReport& report);
// Aligned plain-text rendering: per-class table, totals, confusion matrix.
std::string format_report(const EvalReport& report);

}  // namespace lid
