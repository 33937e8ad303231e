// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth.hpp
 * @brief  Deterministic synthetic exam data with a known latent proficiency.
 *
 * Each speaker draws a latent grade g ~ U[1, 6]. Part grades are
 * g + N(0, sigma_part) clamped to [1, 6] and rounded to the nearest half
 * grade; these rounded values are the reference grades. Every frame of a
 * part-p response is
 *
 *   x_t = W_p e(g_p) + N(0, sigma_frame^2 I)
 *
 * with g_p the reference part grade, e(g) = (1, z, z^2, z^3) for
 * z = (g - 3.5) / 2.5, and W_p a fixed seeded D x 4 Gaussian projection.
 */
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gradekit/core.hpp"

namespace gradekit {

struct SynthSpec {
  std::size_t n_train = 200;
  std::size_t n_calibration = 100;
  std::size_t n_test = 100;
  Eigen::Index embedding_dim = 16;
  int frames_min = 4;
  int frames_max = 12;
  std::array<int, kNumParts> responses_per_part = {6, 8, 1, 1, 5};
  double sigma_part = 0.3;
  double sigma_frame = 0.1;
  /// Noise of each simulated grader's part predictions; grader g uses
  /// entry g, or the last entry when there are fewer entries than graders.
  std::vector<double> view_sigmas = {0.5};
  bool half_grade_rounding = true;
  std::uint64_t seed = 0;

  /// Throws DataError on non-positive counts or negative noise.
  void check() const;
};

struct SynthData {
  Dataset train;
  Dataset calibration;
  Dataset test;
};

/// Grade embedding e(g) = (1, z, z^2, z^3).
Eigen::Vector4d grade_features(Grade grade);

/// The D x 4 projection used for `part`.
Eigen::MatrixXd part_projection(const SynthSpec& spec, PartId part);

SynthData generate(const SynthSpec& spec);

struct GraderViews {
  SynthData data;
  /// One table per grader ("g1", "g2", ...) covering every split.
  std::vector<PredictionTable> graders;
};

/// Part predictions of G simulated graders: reference part grade plus
/// independent N(0, sigma_view_g) noise. Throws DataError if graders < 2.
GraderViews generate_grader_views(const SynthSpec& spec, int graders);

}  // namespace gradekit
