// SPDX-License-Identifier: Apache-2.0
/**
 * @file   oracles.hpp
 * @brief  Independent reference computations used only by tests.
 *
 * Nothing here calls the code paths it is used to check: metrics are
 * recomputed with plain loops, forward passes with scalar loops over
 * std::vector, gradients with central differences and ridge fits with a
 * QR solve of the augmented system.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gradekit/net.hpp"

namespace gradekit::oracle {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = 1.0,
                                         double hi = 6.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (long double)(a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(static_cast<double>(s / a.size()));
}

/// Covariance-formula Pearson correlation in long double.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  const long double ma = sa / n, mb = sb / n;
  for (std::size_t i = 0; i < n; ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

/// Rank by counting: rank_i = 1 + #{j: v_j < v_i} + (#{j: v_j == v_i} - 1) / 2.
inline std::vector<double> count_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = 1.0 + static_cast<double>(less) + (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(count_ranks(a), count_ranks(b));
}

inline double within(const std::vector<double>& a, const std::vector<double>& b, double tau) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < a.size(); ++i) k += std::abs(a[i] - b[i]) <= tau;
  return 100.0 * static_cast<double>(k) / static_cast<double>(a.size());
}

inline double activate(Activation act, double z) {
  switch (act) {
    case Activation::ReLU: return z > 0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::GELU: return 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
  }
  return 0.0;
}

/// Layer-by-layer eval-mode forward pass with scalar loops.
inline double straight_line_forward(const RegressionHead& head, const Eigen::VectorXd& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (std::size_t l = 0; l < head.num_layers(); ++l) {
    const auto& s = head.layer_shape(l);
    const auto& p = head.parameters();
    const Eigen::Index w0 = head.weight_offset(l);
    const Eigen::Index b0 = head.bias_offset(l);
    std::vector<double> z(static_cast<std::size_t>(s.out));
    for (Eigen::Index i = 0; i < s.out; ++i) {
      double acc = p(b0 + i);
      for (Eigen::Index j = 0; j < s.in; ++j) acc += p(w0 + j * s.out + i) * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = s.activated ? activate(head.architecture().activation, acc) : acc;
    }
    a = std::move(z);
  }
  return a.front();
}

/// Central-difference gradient of the (train-mode when mask_seed is set)
/// output. The dropout mask is reproduced by reseeding before each pass.
inline Eigen::VectorXd finite_difference(RegressionHead head, const Eigen::VectorXd& x,
                                         std::optional<std::uint64_t> mask_seed,
                                         double h = 1e-5) {
  auto output = [&](const RegressionHead& hd) {
    if (!mask_seed) return predict(hd, x);
    Rng rng(*mask_seed);
    return forward(hd, x, ForwardMode::train(rng)).first;
  };
  const Eigen::Index n = head.parameters().size();
  Eigen::VectorXd grad(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = head.parameters()(i);
    head.mutable_parameters()(i) = p + h;
    const double up = output(head);
    head.mutable_parameters()(i) = p - h;
    const double down = output(head);
    head.mutable_parameters()(i) = p;
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Largest |a - b| / max(|a|, |b|, floor) over all entries.
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
  }
  return worst;
}

/// Ridge regression with an unpenalized intercept, solved as the
/// augmented least-squares problem [X; sqrt(lambda) P] beta = [y; 0] by
/// column-pivoting QR. Returns (intercept, coefficients...).
inline Eigen::VectorXd ridge_qr(const Eigen::MatrixXd& columns, const Eigen::VectorXd& y,
                                double lambda) {
  const Eigen::Index n = columns.rows(), p = columns.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + p, p + 1);
  aug.topLeftCorner(n, 1).setOnes();
  aug.topRightCorner(n, p) = columns;
  aug.bottomRightCorner(p, p) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p);
  rhs.head(n) = y;
  return aug.colPivHouseholderQr().solve(rhs);
}

}  // namespace gradekit::oracle
