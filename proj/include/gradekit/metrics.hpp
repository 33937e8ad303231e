// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Evaluation metrics for predicted grades against references.
 */
#pragma once

#include <span>
#include <string>
#include <vector>

#include "gradekit/core.hpp"

namespace gradekit {

/// Root-mean-square error. Throws ShapeError on length mismatch or empty input.
double rmse(std::span<const Grade> pred, std::span<const Grade> ref);

/// Sample Pearson correlation. Needs n >= 2 and non-zero variance in both
/// inputs (DegenerateInput otherwise).
double pcc(std::span<const Grade> pred, std::span<const Grade> ref);

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman correlation: Pearson correlation of the average ranks.
double src(std::span<const Grade> pred, std::span<const Grade> ref);

/// Percentage of predictions with |pred - ref| <= tau (boundary inclusive).
double within(std::span<const Grade> pred, std::span<const Grade> ref, double tau);

struct MetricsReport {
  double rmse = 0.0;
  double pcc = 0.0;
  double src = 0.0;
  double within_half = 0.0;
  double within_one = 0.0;
  std::size_t n = 0;
};

MetricsReport report(std::span<const Grade> pred, std::span<const Grade> ref);

struct LabelledReport {
  std::string label;
  MetricsReport metrics;
};

/// Markdown table in the column order PCC, SRC, RMSE, %<=0.5, %<=1.0.
std::string render_metrics_table(std::span<const LabelledReport> rows);
/// JSON object with the five metrics and n.
std::string serialize_report(const MetricsReport& r);
MetricsReport parse_report(std::string_view text);

struct ScatterPoint {
  std::string speaker;
  Grade ref = 0.0;
  Grade pred = 0.0;
};

/// CSV with header `speaker,ref,pred`.
std::string render_scatter_csv(std::span<const ScatterPoint> points);

}  // namespace gradekit
