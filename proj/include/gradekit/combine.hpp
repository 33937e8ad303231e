// SPDX-License-Identifier: Apache-2.0
/**
 * @file   combine.hpp
 * @brief  Calibration and combination of grader outputs by per-part linear
 *         regression.
 *
 * The overall grade of speaker n is predicted as
 *
 *   y_hat(n) = b0 + sum_p b_p * y_hat_p(n)
 *
 * where each column p is one (grader, part) prediction. A single grader's
 * five part columns give its per-part calibration; columns from several
 * graders give a multi-system combination. Both go through fit_ols.
 */
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gradekit/core.hpp"

namespace gradekit {

/// Column tag "<grader>:<part>", part being P1..P5 or overall.
std::string column_tag(std::string_view grader, std::optional<PartId> part);

struct PredictionMatrix {
  std::vector<std::string> speakers;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;   // speakers x columns
  Eigen::VectorXd targets;  // reference overall grade per speaker
  /// Speakers seen in the inputs but absent from the join.
  std::vector<std::string> dropped_speakers;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  /// Throws ShapeError / DataError on size mismatch, duplicate tags or
  /// non-finite cells.
  void check() const;
  /// Matrix restricted to the given columns, in that order.
  PredictionMatrix select(std::span<const std::string> tags) const;
};

struct CombinationModel {
  double intercept = 0.0;
  std::vector<std::string> columns;
  Eigen::VectorXd coefficients;
  bool regularized = false;

  /// Throws MissingColumn.
  double coefficient(std::string_view tag) const;

  /// Intercept 0 and weight 1/k on each of the k columns; five part
  /// columns give the 0.2 simple-averaging baseline.
  static CombinationModel equal_weight(std::vector<std::string> columns);
};

inline constexpr double kConditionLimit = 1e12;
inline constexpr double kRidgeLambda = 1e-8;

/// Simple average of exactly five part scores; bit-identical to
/// overall_grade. Throws ArityError on any other count.
Grade equal_weight_combine(std::span<const Grade> part_scores);

/// Least squares with an intercept column, via the normal equations. When
/// the Gram matrix condition estimate exceeds kConditionLimit the fit adds
/// kRidgeLambda to the non-intercept diagonal and sets `regularized`.
/// Throws UnderdeterminedError if rows < columns + 1.
CombinationModel fit_ols(const PredictionMatrix& matrix);

/// b0 + sum_p b_p * row[p]. Throws MissingColumn.
Grade apply(const CombinationModel& model, const std::map<std::string, Grade>& row);
/// Applies the model to every row of a matrix (columns matched by tag).
Eigen::VectorXd apply(const CombinationModel& model, const PredictionMatrix& matrix);

/// Inner join of prediction tables on speaker, against reference overall
/// grades from `targets`. Throws DuplicatePrediction, EmptyJoin.
PredictionMatrix build_matrix(std::span<const PredictionTable> tables, const Dataset& targets);

// {"intercept": b0, "coefficients": {tag: value, ...}, "regularized": bool}
std::string serialize_model(const CombinationModel& model);
CombinationModel parse_model(std::string_view text);
void save_model(const CombinationModel& model, const std::filesystem::path& path);
CombinationModel load_model(const std::filesystem::path& path);

/// Markdown coefficient table: one row per grader, columns P1..P5 (and
/// `overall` when used), intercept in the last column.
std::string render_coefficient_table(const CombinationModel& model);

}  // namespace gradekit
