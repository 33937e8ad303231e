// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <unordered_map>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "gradekit/core.hpp"
#include "gradekit/errors.hpp"
#include "gradekit/format.hpp"

namespace gradekit {

namespace {

using nlohmann::json;

double number_field(const json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_number())
    throw ParseError(std::string("missing or non-numeric '") + key + "'", line);
  return it->get<double>();
}

Eigen::MatrixXd parse_frames(const json& record, std::size_t line) {
  auto it = record.find("frames");
  if (it == record.end() || !it->is_array())
    throw ParseError("missing 'frames' array", line);
  const json& rows = *it;
  if (rows.empty()) throw ShapeError("line " + std::to_string(line) + ": no frames");
  if (!rows.front().is_array() || rows.front().empty())
    throw ParseError("frames must be non-empty arrays of numbers", line);
  const std::size_t width = rows.front().size();
  Eigen::MatrixXd frames(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(width));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const json& row = rows[t];
    if (!row.is_array()) throw ParseError("frame is not an array", line);
    if (row.size() != width)
      throw ShapeError("line " + std::to_string(line) + ": frame " +
                       std::to_string(t) + " has width " +
                       std::to_string(row.size()) + ", expected " +
                       std::to_string(width));
    for (std::size_t d = 0; d < width; ++d) {
      if (!row[d].is_number()) throw ParseError("non-numeric frame value", line);
      frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) =
          row[d].get<double>();
    }
  }
  return frames;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto end = text.find('\n');
    std::string_view line = text.substr(0, end);
    ++line_no;
    fn(trim_cr(line), line_no);
    if (end == std::string_view::npos) break;
    text.remove_prefix(end + 1);
  }
}

}  // namespace

Dataset parse_dataset(std::string_view text, Split split) {
  Dataset dataset;
  dataset.split = split;
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_map<std::string, std::size_t> overall_line;

  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw ParseError("record is not an object", line_no);
    auto speaker_it = record.find("speaker");
    auto part_it = record.find("part");
    if (speaker_it == record.end() || !speaker_it->is_string())
      throw ParseError("missing 'speaker' string", line_no);
    if (part_it == record.end() || !part_it->is_string())
      throw ParseError("missing 'part' string", line_no);

    const std::string speaker = speaker_it->get<std::string>();
    PartId part;
    try {
      part = parse_part(part_it->get<std::string>());
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    const double ref_grade = number_field(record, "ref_grade", line_no);
    if (!std::isfinite(ref_grade)) throw ParseError("non-finite ref_grade", line_no);
    Eigen::MatrixXd frames = parse_frames(record, line_no);

    auto [it, inserted] = index.try_emplace(speaker, dataset.submissions.size());
    if (inserted) dataset.submissions.push_back(Submission{.speaker_id = speaker});
    Submission& sub = dataset.submissions[it->second];

    auto grade_it = sub.ref_part_grades.find(part);
    if (grade_it == sub.ref_part_grades.end())
      sub.ref_part_grades.emplace(part, ref_grade);
    else if (grade_it->second != ref_grade)
      throw ParseError("conflicting ref_grade for " + speaker + "/" +
                           std::string(to_string(part)),
                       line_no);

    auto overall_it = record.find("ref_overall");
    if (overall_it != record.end() && !overall_it->is_null()) {
      if (!overall_it->is_number())
        throw ParseError("non-numeric 'ref_overall'", line_no);
      const double overall = overall_it->get<double>();
      if (sub.ref_overall && *sub.ref_overall != overall)
        throw ParseError("conflicting ref_overall for " + speaker, line_no);
      sub.ref_overall = overall;
    }
    sub.responses[part].push_back(FrameSequence{std::move(frames), part});
  });

  for (auto& sub : dataset.submissions) {
    if (sub.ref_part_grades.size() != kNumParts) continue;
    const Grade mean = overall_grade(sub.ref_part_grades);
    if (sub.ref_overall && std::abs(*sub.ref_overall - mean) > 1e-6)
      spdlog::warn("speaker '{}': ref_overall {} disagrees with part mean {}; "
                   "using the mean",
                   sub.speaker_id, *sub.ref_overall, mean);
    sub.ref_overall = mean;
  }
  validate(dataset);
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, Split split) {
  return parse_dataset(read_file(path), split);
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& sub : dataset.submissions) {
    const std::string speaker = json(sub.speaker_id).dump();
    for (const auto& [part, seqs] : sub.responses) {
      const Grade grade = sub.ref_part_grades.at(part);
      for (const auto& seq : seqs) {
        out += "{\"speaker\": ";
        out += speaker;
        out += ", \"part\": \"";
        out += to_string(part);
        out += "\", \"frames\": [";
        for (Eigen::Index t = 0; t < seq.frames.rows(); ++t) {
          if (t) out += ", ";
          out += '[';
          for (Eigen::Index d = 0; d < seq.frames.cols(); ++d) {
            if (d) out += ", ";
            out += format_real(seq.frames(t, d));
          }
          out += ']';
        }
        out += "], \"ref_grade\": ";
        out += format_real(grade);
        if (sub.ref_overall) {
          out += ", \"ref_overall\": ";
          out += format_real(*sub.ref_overall);
        }
        out += "}\n";
      }
    }
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, serialize_dataset(dataset));
}

// ---------------------------------------------------------------------------

PredictionTable parse_predictions(std::string_view text) {
  PredictionTable table;
  bool header_seen = false;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    if (!header_seen) {
      if (line != "speaker,part,grader,score")
        throw ParseError("expected header 'speaker,part,grader,score'", line_no);
      header_seen = true;
      return;
    }
    std::array<std::string_view, 4> fields;
    std::size_t n = 0;
    std::string_view rest = line;
    while (true) {
      auto comma = rest.find(',');
      if (n == fields.size()) throw ParseError("too many fields", line_no);
      fields[n++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (n != fields.size()) throw ParseError("expected 4 fields", line_no);

    PredictionRecord record;
    record.speaker = std::string(fields[0]);
    if (record.speaker.empty()) throw ParseError("empty speaker", line_no);
    if (fields[1] != "overall") {
      try {
        record.part = parse_part(fields[1]);
      } catch (const ParseError& e) {
        throw ParseError(e.what(), line_no);
      }
    }
    record.grader = std::string(fields[2]);
    if (record.grader.empty()) throw ParseError("empty grader", line_no);
    const char* first = fields[3].data();
    const char* last = first + fields[3].size();
    auto [ptr, ec] = std::from_chars(first, last, record.score);
    if (ec != std::errc{} || ptr != last || !std::isfinite(record.score))
      throw ParseError("invalid score '" + std::string(fields[3]) + "'", line_no);
    table.push_back(std::move(record));
  });
  if (!header_seen) throw ParseError("empty predictions file");
  return table;
}

PredictionTable load_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_file(path));
}

std::string serialize_predictions(const PredictionTable& table) {
  std::string out = "speaker,part,grader,score\n";
  for (const auto& r : table) {
    out += r.speaker;
    out += ',';
    out += r.part ? std::string(to_string(*r.part)) : std::string("overall");
    out += ',';
    out += r.grader;
    out += ',';
    out += format_real(r.score);
    out += '\n';
  }
  return out;
}

void save_predictions(const PredictionTable& table,
                      const std::filesystem::path& path) {
  write_file(path, serialize_predictions(table));
}

}  // namespace gradekit
