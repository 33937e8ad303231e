// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ensemble.hpp
 * @brief  Ensembles of independently seeded heads for one exam part.
 *
 * Member k is trained with seed base_seed + k and otherwise identical
 * configuration. The ensemble score for a response is the uniform mean of
 * member scores; a part score is the mean over the part's responses.
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "gradekit/core.hpp"
#include "gradekit/net.hpp"
#include "gradekit/optim.hpp"

namespace gradekit {

inline constexpr int kDefaultEnsembleSize = 5;

struct GraderEnsemble {
  PartId part = PartId::P1;
  std::vector<RegressionHead> members;
  std::vector<std::uint64_t> member_seeds;

  /// Throws ShapeError unless members share one architecture.
  void check() const;
};

/// Trains K members, running up to `threads` of them concurrently. The
/// result does not depend on `threads`.
GraderEnsemble train_ensemble(const Dataset& dataset, const TrainConfig& cfg, int members,
                              std::uint64_t base_seed, unsigned threads = 1);

/// Member-mean score for each column of `inputs` (D x n).
Eigen::VectorXd predict_pooled(const GraderEnsemble& ensemble, const Eigen::MatrixXd& inputs);

/// Mean over the part's responses of the member-mean score.
/// Throws MissingPart if the submission has no response for the part.
Grade predict_part(const GraderEnsemble& ensemble, const Submission& sub);

struct SubmissionPrediction {
  std::array<Grade, kNumParts> parts{};
  Grade overall = 0.0;
};

/// Scores every part and averages them into the overall grade.
/// Throws MissingPart if an ensemble or a response is missing.
SubmissionPrediction predict_submission(const std::map<PartId, GraderEnsemble>& ensembles,
                                        const Submission& sub);

/// Directory layout: manifest.json plus member_<k>.json per member.
void save_ensemble(const GraderEnsemble& ensemble, const std::filesystem::path& dir);
GraderEnsemble load_ensemble(const std::filesystem::path& dir);

}  // namespace gradekit
