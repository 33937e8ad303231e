// SPDX-License-Identifier: Apache-2.0
#include "gradekit/combine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "gradekit/errors.hpp"
#include "gradekit/format.hpp"

namespace gradekit {

namespace {

struct TagParts {
  std::string grader;
  std::string part;
};

TagParts split_tag(std::string_view tag) {
  auto colon = tag.rfind(':');
  if (colon == std::string_view::npos) return {std::string(tag), ""};
  return {std::string(tag.substr(0, colon)), std::string(tag.substr(colon + 1))};
}

// P1..P5 first, then overall.
int part_rank(const std::optional<PartId>& part) {
  return part ? static_cast<int>(index_of(*part)) : static_cast<int>(kNumParts);
}

}  // namespace

std::string column_tag(std::string_view grader, std::optional<PartId> part) {
  std::string tag(grader);
  tag += ':';
  tag += part ? std::string(to_string(*part)) : std::string("overall");
  return tag;
}

void PredictionMatrix::check() const {
  if (values.rows() != static_cast<Eigen::Index>(speakers.size()) ||
      values.cols() != static_cast<Eigen::Index>(columns.size()) ||
      targets.size() != values.rows())
    throw ShapeError("prediction matrix dimensions are inconsistent");
  std::set<std::string> unique(columns.begin(), columns.end());
  if (unique.size() != columns.size()) throw DataError("duplicate column tags");
  if (!values.allFinite() || !targets.allFinite())
    throw InvalidScore("prediction matrix has non-finite cells");
}

PredictionMatrix PredictionMatrix::select(std::span<const std::string> tags) const {
  PredictionMatrix out;
  out.speakers = speakers;
  out.targets = targets;
  out.dropped_speakers = dropped_speakers;
  out.values.resize(rows(), static_cast<Eigen::Index>(tags.size()));
  for (std::size_t j = 0; j < tags.size(); ++j) {
    auto it = std::find(columns.begin(), columns.end(), tags[j]);
    if (it == columns.end()) throw MissingColumn("no column '" + tags[j] + "'");
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(it - columns.begin());
    out.columns.push_back(tags[j]);
  }
  return out;
}

double CombinationModel::coefficient(std::string_view tag) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == tag) return coefficients(static_cast<Eigen::Index>(j));
  throw MissingColumn("model has no column '" + std::string(tag) + "'");
}

CombinationModel CombinationModel::equal_weight(std::vector<std::string> columns) {
  CombinationModel model;
  const auto k = static_cast<Eigen::Index>(columns.size());
  model.columns = std::move(columns);
  model.coefficients = Eigen::VectorXd::Constant(k, k ? 1.0 / static_cast<double>(k) : 0.0);
  return model;
}

Grade equal_weight_combine(std::span<const Grade> part_scores) {
  if (part_scores.size() != kNumParts)
    throw ArityError("equal-weight combination needs exactly five part scores, got " +
                     std::to_string(part_scores.size()));
  std::array<Grade, kNumParts> ordered{};
  std::copy(part_scores.begin(), part_scores.end(), ordered.begin());
  return overall_grade(ordered);
}

CombinationModel fit_ols(const PredictionMatrix& matrix) {
  matrix.check();
  const Eigen::Index n = matrix.rows();
  const Eigen::Index p = matrix.cols();
  if (n < p + 1)
    throw UnderdeterminedError("need at least " + std::to_string(p + 1) + " rows for " +
                               std::to_string(p) + " columns, got " + std::to_string(n));

  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = matrix.values;
  Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * matrix.targets;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  const double condition =
      smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();

  CombinationModel model;
  model.columns = matrix.columns;
  if (condition > kConditionLimit) {
    gram.diagonal().tail(p).array() += kRidgeLambda;
    model.regularized = true;
  }
  const Eigen::VectorXd beta = gram.ldlt().solve(rhs);
  if (!beta.allFinite()) throw NumericalError("least-squares solve produced non-finite coefficients");
  model.intercept = beta(0);
  model.coefficients = beta.tail(p);
  return model;
}

Grade apply(const CombinationModel& model, const std::map<std::string, Grade>& row) {
  Grade out = model.intercept;
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    auto it = row.find(model.columns[j]);
    if (it == row.end()) throw MissingColumn("row has no column '" + model.columns[j] + "'");
    out += model.coefficients(static_cast<Eigen::Index>(j)) * it->second;
  }
  return out;
}

Eigen::VectorXd apply(const CombinationModel& model, const PredictionMatrix& matrix) {
  const PredictionMatrix selected = matrix.select(model.columns);
  Eigen::VectorXd out = selected.values * model.coefficients;
  out.array() += model.intercept;
  return out;
}

PredictionMatrix build_matrix(std::span<const PredictionTable> tables, const Dataset& targets) {
  struct Column {
    std::string grader;
    std::optional<PartId> part;
    std::size_t grader_order;
  };
  std::unordered_map<std::string, std::size_t> grader_order;
  std::map<std::string, Column> column_info;
  std::map<std::pair<std::string, std::string>, Grade> cells;
  std::vector<std::string> seen_speakers;
  std::set<std::string> seen_set;

  for (const auto& table : tables) {
    for (const auto& rec : table) {
      auto [g, _] = grader_order.try_emplace(rec.grader, grader_order.size());
      const std::string tag = column_tag(rec.grader, rec.part);
      column_info.try_emplace(tag, Column{rec.grader, rec.part, g->second});
      if (!cells.emplace(std::pair{rec.speaker, tag}, rec.score).second)
        throw DuplicatePrediction("duplicate prediction for speaker '" + rec.speaker +
                                  "', column '" + tag + "'");
      if (seen_set.insert(rec.speaker).second) seen_speakers.push_back(rec.speaker);
    }
  }

  std::vector<std::pair<std::string, Column>> ordered(column_info.begin(), column_info.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second.grader_order != b.second.grader_order)
      return a.second.grader_order < b.second.grader_order;
    return part_rank(a.second.part) < part_rank(b.second.part);
  });

  PredictionMatrix matrix;
  for (const auto& [tag, _] : ordered) matrix.columns.push_back(tag);
  std::vector<std::vector<Grade>> rows;
  std::vector<Grade> row_targets;
  std::set<std::string> joined;
  for (const auto& sub : targets.submissions) {
    if (!sub.ref_overall) continue;
    std::vector<Grade> row;
    row.reserve(matrix.columns.size());
    for (const auto& tag : matrix.columns) {
      auto it = cells.find({sub.speaker_id, tag});
      if (it == cells.end()) break;
      row.push_back(it->second);
    }
    if (row.size() != matrix.columns.size() || row.empty()) continue;
    matrix.speakers.push_back(sub.speaker_id);
    joined.insert(sub.speaker_id);
    rows.push_back(std::move(row));
    row_targets.push_back(*sub.ref_overall);
  }
  for (const auto& sub : targets.submissions)
    if (!joined.contains(sub.speaker_id)) matrix.dropped_speakers.push_back(sub.speaker_id);
  for (const auto& s : seen_speakers)
    if (!joined.contains(s) && !targets.find(s)) matrix.dropped_speakers.push_back(s);

  if (rows.empty()) throw EmptyJoin("no speaker has every prediction column and a reference");
  matrix.values.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(matrix.columns.size()));
  matrix.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      matrix.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    matrix.targets(static_cast<Eigen::Index>(i)) = row_targets[i];
  }
  return matrix;
}

std::string serialize_model(const CombinationModel& model) {
  std::string out = "{\"intercept\": " + format_real(model.intercept);
  out += ",\n \"coefficients\": {";
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    out += j ? ",\n  " : "\n  ";
    out += nlohmann::json(model.columns[j]).dump();
    out += ": ";
    out += format_real(model.coefficients(static_cast<Eigen::Index>(j)));
  }
  out += "\n },\n \"regularized\": ";
  out += model.regularized ? "true" : "false";
  out += "}\n";
  return out;
}

CombinationModel parse_model(std::string_view text) {
  using nlohmann::ordered_json;
  try {
    ordered_json doc = ordered_json::parse(text);
    CombinationModel model;
    model.intercept = doc.at("intercept").get<double>();
    const auto& coefs = doc.at("coefficients");
    if (!coefs.is_object()) throw ParseError("coefficients must be an object");
    model.coefficients.resize(static_cast<Eigen::Index>(coefs.size()));
    Eigen::Index j = 0;
    for (const auto& [tag, value] : coefs.items()) {
      model.columns.push_back(tag);
      model.coefficients(j++) = value.get<double>();
    }
    model.regularized = doc.value("regularized", false);
    return model;
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("invalid combination model: ") + e.what());
  }
}

void save_model(const CombinationModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

CombinationModel load_model(const std::filesystem::path& path) {
  return parse_model(read_file(path));
}

std::string render_coefficient_table(const CombinationModel& model) {
  std::vector<std::string> graders;
  std::map<std::string, std::map<std::string, double>> grid;
  bool has_overall = false;
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    auto [grader, part] = split_tag(model.columns[j]);
    if (!grid.contains(grader)) graders.push_back(grader);
    grid[grader][part] = model.coefficients(static_cast<Eigen::Index>(j));
    has_overall = has_overall || part == "overall";
  }
  std::vector<std::string> headers = {"P1", "P2", "P3", "P4", "P5"};
  if (has_overall) headers.push_back("overall");

  std::string out = "| Model |";
  for (const auto& h : headers) out += " " + h + " |";
  out += " β0 |\n|---|";
  for (std::size_t i = 0; i <= headers.size(); ++i) out += "---:|";
  out += '\n';
  for (std::size_t g = 0; g < graders.size(); ++g) {
    out += "| " + graders[g] + " |";
    for (const auto& h : headers) {
      auto it = grid[graders[g]].find(h);
      out += it == grid[graders[g]].end() ? std::string(" |")
                                          : fmt::format(" {:.2f} |", it->second);
    }
    out += g == 0 ? fmt::format(" {:.2f} |\n", model.intercept) : std::string(" |\n");
  }
  return out;
}

}  // namespace gradekit
