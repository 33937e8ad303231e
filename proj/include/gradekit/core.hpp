// SPDX-License-Identifier: Apache-2.0
/**
 * @file   core.hpp
 * @brief  Exam domain model: parts, grades, responses, submissions and
 *         datasets, plus the on-disk dataset and prediction formats.
 *
 * A speaking exam has five parts, each graded on the 1-6 scale. The
 * submission-level grade is the plain mean of the five part grades.
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace gradekit {

enum class PartId : std::uint8_t { P1 = 0, P2, P3, P4, P5 };

inline constexpr std::size_t kNumParts = 5;
inline constexpr std::array<PartId, kNumParts> kAllParts = {
    PartId::P1, PartId::P2, PartId::P3, PartId::P4, PartId::P5};

std::string_view to_string(PartId part);
/// Parses "P1".."P5". Throws ParseError otherwise.
PartId parse_part(std::string_view text);
inline std::size_t index_of(PartId part) {
  return static_cast<std::size_t>(part);
}

/// Score on the 1-6 proficiency scale. Predictions may leave [1, 6].
using Grade = double;

inline constexpr Grade kMinGrade = 1.0;
inline constexpr Grade kMaxGrade = 6.0;

/// One response: T x D matrix, one row per frame embedding.
struct FrameSequence {
  Eigen::MatrixXd frames;
  PartId part = PartId::P1;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index width() const { return frames.cols(); }
};

struct Submission {
  std::string speaker_id;
  std::map<PartId, std::vector<FrameSequence>> responses;
  std::map<PartId, Grade> ref_part_grades;
  /// Present whenever all five part grades are present.
  std::optional<Grade> ref_overall;

  bool has_part(PartId part) const;
};

enum class Split : std::uint8_t { Train, Calibration, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Dataset {
  Split split = Split::Train;
  std::vector<Submission> submissions;

  const Submission* find(std::string_view speaker_id) const;
  /// Number of responses for one part across all submissions.
  std::size_t count_responses(PartId part) const;
};

/// Mean of the five part grades, summed in P1..P5 order.
/// Throws MissingPart naming the first absent part.
Grade overall_grade(const std::map<PartId, Grade>& part_grades);
/// Same formula over an ordered P1..P5 array.
Grade overall_grade(const std::array<Grade, kNumParts>& part_grades);

/// CEFR band for a score: nearest integer (half-up), clamped to 1..6,
/// mapped to A1, A2, B1, B2, C1, C2. Throws InvalidScore if non-finite.
std::string cefr_label(Grade score);

/// Checks domain invariants (finite frames, uniform width per response,
/// unique speakers, reference grades in range, overall consistency).
/// Throws ShapeError / InvalidScore / ParseError.
void validate(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Dataset file: JSON Lines, one record per response.
//   {"speaker": str, "part": "P1".."P5", "frames": [[...], ...],
//    "ref_grade": float, "ref_overall": float?}
// Floats are written with 17 significant digits.

Dataset load_dataset(const std::filesystem::path& path,
                     Split split = Split::Train);
Dataset parse_dataset(std::string_view text, Split split = Split::Train);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Predictions file: CSV with header `speaker,part,grader,score`.
// `part` is P1..P5 or `overall`.

struct PredictionRecord {
  std::string speaker;
  std::optional<PartId> part;  // nullopt means `overall`
  std::string grader;
  Grade score = 0.0;
};

using PredictionTable = std::vector<PredictionRecord>;

PredictionTable load_predictions(const std::filesystem::path& path);
PredictionTable parse_predictions(std::string_view text);
void save_predictions(const PredictionTable& table,
                      const std::filesystem::path& path);
std::string serialize_predictions(const PredictionTable& table);

}  // namespace gradekit
