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

#include "lid/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "lid/error.hpp"

namespace lid {
namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

EvalReport report_from_confusion(std::vector<std::string> labels, std::vector<std::vector<std::int64_t>> confusion) {
  const std::size_t k = labels.size();
  if (k == 0) throw DataError("evaluation report: no classes");
  if (confusion.size() != k) throw ShapeError("evaluation report: confusion matrix does not match the label count");
  for (const auto& row : confusion) {
    if (row.size() != k) throw ShapeError("evaluation report: confusion matrix is not square");
    for (auto v : row) {
      if (v < 0) throw DataError("evaluation report: negative count in confusion matrix");
    }
  }
  EvalReport r;
  r.labels = std::move(labels);
  r.confusion = std::move(confusion);
  std::int64_t trace = 0;
  for (std::size_t i = 0; i < k; ++i) {
    trace += r.confusion[i][i];
    for (std::size_t j = 0; j < k; ++j) r.total += r.confusion[i][j];
  }
  r.accuracy = ratio(trace, r.total);
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.label = r.labels[c];
    for (std::size_t j = 0; j < k; ++j) m.support += r.confusion[c][j];
    for (std::size_t i = 0; i < k; ++i) m.predicted += r.confusion[i][c];
    const std::int64_t tp = r.confusion[c][c];
    m.precision = ratio(tp, m.predicted);
    m.recall = ratio(tp, m.support);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    r.per_class.push_back(std::move(m));
  }
  r.macro_precision /= static_cast<double>(k);
  r.macro_recall /= static_cast<double>(k);
  r.macro_f1 /= static_cast<double>(k);
  return r;
}

EvalReport report_from_predictions(std::vector<std::string> labels, std::span<const int> truth,
                                   std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("evaluation report: truth and prediction counts differ");
  const auto k = static_cast<int>(labels.size());
  std::vector<std::vector<std::int64_t>> confusion(labels.size(), std::vector<std::int64_t>(labels.size(), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k || predicted[i] < 0 || predicted[i] >= k) {
      throw DataError("evaluation report: class index out of range at sample " + std::to_string(i));
    }
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return report_from_confusion(std::move(labels), std::move(confusion));
}

EvalReport merge_reports(const EvalReport& a, const EvalReport& b) {
  if (a.labels != b.labels) throw DataError("merge_reports: label sets differ");
  auto confusion = a.confusion;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    for (std::size_t j = 0; j < confusion.size(); ++j) confusion[i][j] += b.confusion[i][j];
  }
  return report_from_confusion(a.labels, std::move(confusion));
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : r.per_class) {
    classes.push_back({{"label", m.label},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"predicted", m.predicted}});
  }
  return {{"labels", r.labels},     {"total", r.total},
          {"accuracy", r.accuracy}, {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall}, {"macro_f1", r.macro_f1},
          {"per_class", classes},   {"confusion", r.confusion}};
}

std::string confusion_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& l : r.labels) out << ',' << l;
  out << '\n';
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    out << r.labels[i];
    for (auto v : r.confusion[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

std::string format_report(const EvalReport& r) {
  std::size_t w = 9;
  for (const auto& l : r.labels) w = std::max(w, l.size());
  auto pad = [](std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
  };
  std::ostringstream out;
  out << pad("class", w) << pad("precision", 11) << pad("recall", 9) << pad("f1", 9) << pad("support", 9) << '\n';
  for (const auto& m : r.per_class) {
    out << pad(m.label, w) << pad(fixed(m.precision), 11) << pad(fixed(m.recall), 9) << pad(fixed(m.f1), 9)
        << pad(std::to_string(m.support), 9) << '\n';
  }
  out << pad("macro", w) << pad(fixed(r.macro_precision), 11) << pad(fixed(r.macro_recall), 9)
      << pad(fixed(r.macro_f1), 9) << pad(std::to_string(r.total), 9) << '\n';
  out << "accuracy " << fixed(r.accuracy) << " (" << r.total << " samples)\n\n";
  out << "confusion (rows true, columns predicted)\n" << pad("", w);
  std::size_t cw = 6;
  for (const auto& l : r.labels) cw = std::max(cw, l.size() + 1);
  for (std::size_t j = 0; j < r.labels.size(); ++j) out << pad(r.labels[j], cw);
  out << '\n';
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    out << pad(r.labels[i], w);
    for (auto v : r.confusion[i]) out << pad(std::to_string(v), cw);
    out << '\n';
  }
  return out.str();
}

}  // namespace lid
