// SPDX-License-Identifier: Apache-2.0
#include "gradekit/synth.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gradekit/errors.hpp"
#include "gradekit/net.hpp"

namespace gradekit {

namespace {

constexpr std::uint32_t kProjectionStream = 10;
constexpr std::uint32_t kSplitStream = 100;
constexpr std::uint32_t kViewStream = 1000;

Dataset generate_split(const SynthSpec& spec, Split split, std::size_t n_speakers,
                       const std::array<Eigen::MatrixXd, kNumParts>& projections) {
  Rng rng = derived_rng(spec.seed, kSplitStream + static_cast<std::uint32_t>(split));
  std::uniform_real_distribution<double> latent(kMinGrade, kMaxGrade);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> length(spec.frames_min, spec.frames_max);

  Dataset dataset;
  dataset.split = split;
  dataset.submissions.reserve(n_speakers);
  for (std::size_t s = 0; s < n_speakers; ++s) {
    Submission sub;
    sub.speaker_id = fmt::format("{}-{:05d}", to_string(split), s);
    const double g = latent(rng);
    for (PartId part : kAllParts) {
      double grade = std::clamp(g + spec.sigma_part * normal(rng), kMinGrade, kMaxGrade);
      if (spec.half_grade_rounding) grade = std::round(grade * 2.0) / 2.0;
      sub.ref_part_grades[part] = grade;

      const Eigen::VectorXd mean = projections[index_of(part)] * grade_features(grade);
      auto& seqs = sub.responses[part];
      for (int r = 0; r < spec.responses_per_part[index_of(part)]; ++r) {
        const int frames = length(rng);
        FrameSequence seq{Eigen::MatrixXd(frames, spec.embedding_dim), part};
        for (int t = 0; t < frames; ++t)
          for (Eigen::Index d = 0; d < spec.embedding_dim; ++d)
            seq.frames(t, d) = mean(d) + spec.sigma_frame * normal(rng);
        seqs.push_back(std::move(seq));
      }
    }
    sub.ref_overall = overall_grade(sub.ref_part_grades);
    dataset.submissions.push_back(std::move(sub));
  }
  return dataset;
}

}  // namespace

void SynthSpec::check() const {
  if (n_train < 1 || n_calibration < 1 || n_test < 1)
    throw DataError("every split needs at least one speaker");
  if (embedding_dim < 1) throw DataError("embedding_dim must be positive");
  if (frames_min < 1 || frames_max < frames_min)
    throw DataError("frame range must satisfy 1 <= min <= max");
  for (int r : responses_per_part)
    if (r < 1) throw DataError("every part needs at least one response");
  if (!(sigma_part >= 0.0) || !(sigma_frame >= 0.0))
    throw DataError("noise levels must be non-negative");
  for (double s : view_sigmas)
    if (!(s >= 0.0)) throw DataError("view noise levels must be non-negative");
}

Eigen::Vector4d grade_features(Grade grade) {
  const double z = (grade - 3.5) / 2.5;
  return {1.0, z, z * z, z * z * z};
}

Eigen::MatrixXd part_projection(const SynthSpec& spec, PartId part) {
  Rng rng = derived_rng(spec.seed, kProjectionStream + static_cast<std::uint32_t>(index_of(part)));
  std::normal_distribution<double> normal(0.0, 0.5);
  Eigen::MatrixXd w(spec.embedding_dim, 4);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
  return w;
}

SynthData generate(const SynthSpec& spec) {
  spec.check();
  std::array<Eigen::MatrixXd, kNumParts> projections;
  for (PartId part : kAllParts) projections[index_of(part)] = part_projection(spec, part);
  return {generate_split(spec, Split::Train, spec.n_train, projections),
          generate_split(spec, Split::Calibration, spec.n_calibration, projections),
          generate_split(spec, Split::Test, spec.n_test, projections)};
}

GraderViews generate_grader_views(const SynthSpec& spec, int graders) {
  if (graders < 2) throw DataError("grader views need at least two graders");
  if (spec.view_sigmas.empty()) throw DataError("view_sigmas must not be empty");
  GraderViews views{generate(spec), {}};
  for (int g = 0; g < graders; ++g) {
    const auto idx = std::min(static_cast<std::size_t>(g), spec.view_sigmas.size() - 1);
    const double sigma = spec.view_sigmas[idx];
    const std::string name = fmt::format("g{}", g + 1);
    Rng rng = derived_rng(spec.seed, kViewStream + static_cast<std::uint32_t>(g));
    std::normal_distribution<double> normal(0.0, 1.0);
    PredictionTable table;
    for (const Dataset* split : {&views.data.train, &views.data.calibration, &views.data.test})
      for (const auto& sub : split->submissions)
        for (PartId part : kAllParts)
          table.push_back({sub.speaker_id, part, name,
                           sub.ref_part_grades.at(part) + sigma * normal(rng)});
    views.graders.push_back(std::move(table));
  }
  return views;
}

}  // namespace gradekit
