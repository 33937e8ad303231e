// SPDX-License-Identifier: Apache-2.0
#include "gradekit/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gradekit/errors.hpp"

namespace gradekit {

std::string_view to_string(PartId part) {
  static constexpr std::array<std::string_view, kNumParts> names = {
      "P1", "P2", "P3", "P4", "P5"};
  return names.at(index_of(part));
}

PartId parse_part(std::string_view text) {
  for (PartId part : kAllParts)
    if (to_string(part) == text) return part;
  throw ParseError("unknown part '" + std::string(text) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Calibration: return "calibration";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  for (Split split : {Split::Train, Split::Calibration, Split::Test})
    if (to_string(split) == text) return split;
  throw ParseError("unknown split '" + std::string(text) + "'");
}

bool Submission::has_part(PartId part) const {
  auto it = responses.find(part);
  return it != responses.end() && !it->second.empty();
}

const Submission* Dataset::find(std::string_view speaker_id) const {
  for (const auto& sub : submissions)
    if (sub.speaker_id == speaker_id) return &sub;
  return nullptr;
}

std::size_t Dataset::count_responses(PartId part) const {
  std::size_t n = 0;
  for (const auto& sub : submissions) {
    auto it = sub.responses.find(part);
    if (it != sub.responses.end()) n += it->second.size();
  }
  return n;
}

Grade overall_grade(const std::array<Grade, kNumParts>& part_grades) {
  Grade sum = 0.0;
  for (Grade g : part_grades) {
    if (!std::isfinite(g)) throw InvalidScore("non-finite part grade");
    sum += g;
  }
  return sum / static_cast<double>(kNumParts);
}

Grade overall_grade(const std::map<PartId, Grade>& part_grades) {
  std::array<Grade, kNumParts> ordered{};
  for (PartId part : kAllParts) {
    auto it = part_grades.find(part);
    if (it == part_grades.end())
      throw MissingPart("missing grade for part " + std::string(to_string(part)));
    ordered[index_of(part)] = it->second;
  }
  return overall_grade(ordered);
}

std::string cefr_label(Grade score) {
  static constexpr std::array<const char*, 6> bands = {"A1", "A2", "B1",
                                                       "B2", "C1", "C2"};
  if (!std::isfinite(score)) throw InvalidScore("non-finite score");
  double level = std::clamp(std::floor(score + 0.5), kMinGrade, kMaxGrade);
  return bands[static_cast<std::size_t>(level) - 1];
}

void validate(const Dataset& dataset) {
  std::set<std::string> seen;
  for (const auto& sub : dataset.submissions) {
    if (!seen.insert(sub.speaker_id).second)
      throw DataError("duplicate speaker '" + sub.speaker_id + "'");
    for (const auto& [part, seqs] : sub.responses) {
      if (seqs.empty()) continue;
      for (const auto& seq : seqs) {
        if (seq.part != part)
          throw ShapeError("response filed under the wrong part");
        if (seq.num_frames() < 1 || seq.width() < 1)
          throw ShapeError("empty response for speaker '" + sub.speaker_id + "'");
        if (!seq.frames.allFinite())
          throw InvalidScore("non-finite frame value for speaker '" +
                             sub.speaker_id + "'");
      }
      if (!sub.ref_part_grades.contains(part))
        throw MissingPart("speaker '" + sub.speaker_id +
                          "' has responses but no grade for " +
                          std::string(to_string(part)));
    }
    for (const auto& [part, grade] : sub.ref_part_grades) {
      if (!std::isfinite(grade) || grade < kMinGrade || grade > kMaxGrade)
        throw InvalidScore("reference grade outside [1, 6] for speaker '" +
                           sub.speaker_id + "'");
    }
    if (sub.ref_part_grades.size() == kNumParts) {
      if (!sub.ref_overall)
        throw DataError("missing overall grade for speaker '" + sub.speaker_id + "'");
      if (std::abs(*sub.ref_overall - overall_grade(sub.ref_part_grades)) > 1e-9)
        throw DataError("overall grade is not the part mean for speaker '" +
                        sub.speaker_id + "'");
    }
  }
}

}  // namespace gradekit
