// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>

#include "gradekit/core.hpp"
#include "gradekit/errors.hpp"

using namespace gradekit;

namespace {

std::map<PartId, Grade> grades(std::array<Grade, 5> g) {
  std::map<PartId, Grade> m;
  for (PartId p : kAllParts) m[p] = g[index_of(p)];
  return m;
}

std::string record(const std::string& speaker, const std::string& part, const std::string& frames,
                   double grade) {
  return "{\"speaker\": \"" + speaker + "\", \"part\": \"" + part + "\", \"frames\": " + frames +
         ", \"ref_grade\": " + std::to_string(grade) + "}\n";
}

}  // namespace

TEST_CASE("overall grade is the mean of the five parts") {
  CHECK(overall_grade(grades({3, 3, 3, 3, 3})) == 3.0);
  CHECK(overall_grade(grades({1, 2, 3, 4, 5})) == 3.0);
  CHECK(overall_grade(grades({2, 3, 3, 4, 6})) == 3.6);
}

TEST_CASE("overall grade names the missing part") {
  auto g = grades({3, 3, 3, 3, 3});
  g.erase(PartId::P4);
  CHECK_THROWS_WITH_AS(overall_grade(g), doctest::Contains("P4"), MissingPart);
}

TEST_CASE("overall grade is permutation invariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1.0, 6.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::array<Grade, 5> g;
    for (auto& x : g) x = u(rng);
    long double exact = 0;
    for (double x : g) exact += x;
    exact /= 5;
    std::array<Grade, 5> shuffled = g;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const double a = overall_grade(g), b = overall_grade(shuffled);
    CHECK(std::abs(a - b) <= 4 * std::numeric_limits<double>::epsilon() * a);
    CHECK(std::abs(a - static_cast<double>(exact)) <= 4 * std::numeric_limits<double>::epsilon() * a);
  }
}

TEST_CASE("cefr labels") {
  CHECK(cefr_label(1.0) == "A1");
  CHECK(cefr_label(4.6) == "C1");
  CHECK(cefr_label(7.3) == "C2");
  CHECK(cefr_label(-2.0) == "A1");
  CHECK(cefr_label(2.5) == "B1");  // half rounds up
  CHECK(cefr_label(2.4999) == "A2");
  CHECK_THROWS_AS(cefr_label(std::nan("")), InvalidScore);
  CHECK_THROWS_AS(cefr_label(INFINITY), InvalidScore);

  SUBCASE("monotone") {
    std::string previous = cefr_label(-1.0);
    for (double s = -1.0; s <= 8.0; s += 0.01) {
      std::string label = cefr_label(s);
      CHECK(label >= previous);  // "A1" < "A2" < "B1" < ... < "C2"
      previous = label;
    }
  }
}

TEST_CASE("part and split names") {
  for (PartId p : kAllParts) CHECK(parse_part(to_string(p)) == p);
  CHECK_THROWS_AS(parse_part("P6"), ParseError);
  CHECK(parse_split("calibration") == Split::Calibration);
}

TEST_CASE("minimal dataset file") {
  Dataset d = parse_dataset(record("s1", "P1", "[[0.5, 1, 2, 3]]", 3.0));
  REQUIRE(d.submissions.size() == 1);
  const auto& sub = d.submissions[0];
  CHECK(sub.speaker_id == "s1");
  REQUIRE(sub.responses.at(PartId::P1).size() == 1);
  CHECK(sub.responses.at(PartId::P1)[0].frames.cols() == 4);
  CHECK(sub.ref_part_grades.at(PartId::P1) == 3.0);
  CHECK_FALSE(sub.ref_overall.has_value());
}

TEST_CASE("ragged frames are a shape error") {
  CHECK_THROWS_AS(parse_dataset(record("s1", "P1", "[[1,2,3,4],[1,2,3,4,5]]", 3.0)), ShapeError);
}

TEST_CASE("malformed records report their line") {
  const std::string text = record("s1", "P1", "[[1]]", 3.0) + "{\"speaker\": \"s2\", \"part\": }\n";
  try {
    parse_dataset(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_dataset(record("s1", "P9", "[[1]]", 3.0)), ParseError);
  CHECK_THROWS_AS(parse_dataset("{\"speaker\": \"s\", \"part\": \"P1\", \"frames\": [[1]]}\n"),
                  ParseError);
  CHECK_THROWS_AS(parse_dataset(record("s1", "P1", "[[1]]", 3.0) + record("s1", "P1", "[[2]]", 4.0)),
                  ParseError);
  CHECK_THROWS_AS(parse_dataset(record("s1", "P1", "[[1]]", 7.5)), InvalidScore);
  CHECK_THROWS_AS(parse_dataset(record("s1", "P1", "[]", 3.0)), ShapeError);
}

TEST_CASE("overall grade is computed when absent and corrected when inconsistent") {
  std::string text;
  const double g[5] = {2, 3, 3, 4, 6};
  for (PartId p : kAllParts) text += record("s1", std::string(to_string(p)), "[[1]]", g[index_of(p)]);
  CHECK(*parse_dataset(text).submissions[0].ref_overall == 3.6);

  std::string wrong;
  for (PartId p : kAllParts)
    wrong += "{\"speaker\": \"s1\", \"part\": \"" + std::string(to_string(p)) +
             "\", \"frames\": [[1]], \"ref_grade\": " + std::to_string(g[index_of(p)]) +
             ", \"ref_overall\": 5.0}\n";
  CHECK(*parse_dataset(wrong).submissions[0].ref_overall == 3.6);
}

TEST_CASE("dataset save/load round trip is bit-identical") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1e3);
  Dataset d;
  for (int s = 0; s < 3; ++s) {
    Submission sub;
    sub.speaker_id = "spk\"" + std::to_string(s);
    for (PartId p : kAllParts) {
      sub.ref_part_grades[p] = 1.0 + (s + index_of(p)) * 0.37;
      for (int r = 0; r < 2; ++r) {
        Eigen::MatrixXd f(3, 5);
        for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = n(rng) * std::pow(10.0, (i % 7) - 3);
        f(0, 0) = 0.1;
        f(1, 1) = -0.0;
        f(2, 2) = 5e-324;
        sub.responses[p].push_back({f, p});
      }
    }
    sub.ref_overall = overall_grade(sub.ref_part_grades);
    d.submissions.push_back(sub);
  }
  const std::string text = serialize_dataset(d);
  Dataset back = parse_dataset(text);
  REQUIRE(back.submissions.size() == d.submissions.size());
  for (std::size_t s = 0; s < d.submissions.size(); ++s) {
    const auto& a = d.submissions[s];
    const auto& b = back.submissions[s];
    CHECK(a.speaker_id == b.speaker_id);
    CHECK(a.ref_part_grades == b.ref_part_grades);
    CHECK(*a.ref_overall == *b.ref_overall);
    for (PartId p : kAllParts) {
      REQUIRE(a.responses.at(p).size() == b.responses.at(p).size());
      for (std::size_t r = 0; r < a.responses.at(p).size(); ++r)
        CHECK(a.responses.at(p)[r].frames == b.responses.at(p)[r].frames);
    }
  }
  CHECK(serialize_dataset(back) == text);
}

TEST_CASE("predictions csv") {
  PredictionTable t = {{"a", PartId::P2, "sd", 3.25}, {"a", std::nullopt, "sd", 0.1}};
  const std::string text = serialize_predictions(t);
  CHECK(text.starts_with("speaker,part,grader,score\n"));
  CHECK(text.find("a,overall,sd,") != std::string::npos);
  PredictionTable back = parse_predictions(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].part == PartId::P2);
  CHECK(back[1].score == 0.1);
  CHECK_FALSE(back[1].part.has_value());

  CHECK_THROWS_AS(parse_predictions("speaker,score\n"), ParseError);
  CHECK_THROWS_AS(parse_predictions("speaker,part,grader,score\na,P1,g,abc\n"), ParseError);
  CHECK_THROWS_AS(parse_predictions("speaker,part,grader,score\na,P1,g\n"), ParseError);
  CHECK_THROWS_AS(parse_predictions("speaker,part,grader,score\na,P1,g,nan\n"), ParseError);
}
