// SPDX-License-Identifier: Apache-2.0
/**
 * @file   net.hpp
 * @brief  Mean pooling and the feed-forward regression heads.
 *
 * A head maps one pooled embedding to a scalar grade. Two layer plans are
 * supported:
 *
 *   Shallow: affine(D->H) + act, dropout, affine(H->1)
 *   Deep:    affine(D->H) + act, affine(H->H) + act, affine(H->H) + act,
 *            dropout, affine(H->B) + act, affine(B->1)
 *
 * with H = 768 and B = 128 by default. All parameters live in one flat
 * vector so optimizers and finite-difference checks can treat them
 * uniformly; per-layer views are Eigen maps into that vector.
 *
 * Batched evaluation uses column-major batches: inputs are D x n, one
 * column per sample.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gradekit/core.hpp"

namespace gradekit {

using Rng = std::mt19937_64;

/// Independent generator for sub-stream `stream` of `seed`.
inline Rng derived_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

enum class HeadKind : std::uint8_t { Shallow, Deep };
enum class Activation : std::uint8_t { ReLU, Tanh, GELU };

std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view text);
std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view text);

struct LayerShape {
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  bool activated = false;

  bool operator==(const LayerShape&) const = default;
};

struct HeadArchitecture {
  HeadKind kind = HeadKind::Shallow;
  Eigen::Index input_dim = 768;
  Activation activation = Activation::ReLU;
  Eigen::Index hidden_width = 768;
  /// Width of the penultimate layer of the Deep plan.
  Eigen::Index bottleneck_width = 128;

  std::vector<LayerShape> layer_plan() const;
  /// Index of the layer whose (activated) output passes through dropout.
  std::size_t dropout_layer() const;
  Eigen::Index num_parameters() const;

  bool operator==(const HeadArchitecture&) const = default;
};

/// Component-wise mean over the frames (rows). Throws EmptySequence if
/// there are no frames.
Eigen::VectorXd mean_pool(const Eigen::MatrixXd& frames);
Eigen::VectorXd mean_pool(const FrameSequence& seq);

class RegressionHead {
 public:
  /// All parameters zero.
  RegressionHead(HeadArchitecture architecture, double dropout_rate);

  const HeadArchitecture& architecture() const { return arch_; }
  double dropout_rate() const { return dropout_rate_; }
  std::size_t num_layers() const { return shapes_.size(); }
  const LayerShape& layer_shape(std::size_t layer) const { return shapes_.at(layer); }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> mutable_weight(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> mutable_bias(std::size_t layer);

  /// Flat parameter vector: per layer, weight (column-major) then bias.
  const Eigen::VectorXd& parameters() const { return params_; }
  /// Any mutable access invalidates outstanding forward caches.
  Eigen::VectorXd& mutable_parameters();

  /// Offsets of layer `layer`'s weight and bias in the flat vector.
  Eigen::Index weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  Eigen::Index bias_offset(std::size_t layer) const;

  /// Identifies the current parameter state; changes on every mutation.
  std::uint64_t state_tag() const { return tag_; }

  bool operator==(const RegressionHead& other) const;

 private:
  void touch();

  HeadArchitecture arch_;
  double dropout_rate_;
  std::vector<LayerShape> shapes_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
  std::uint64_t tag_;
};

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
RegressionHead init_head(const HeadArchitecture& architecture,
                         std::uint64_t seed, double dropout_rate = 0.0);

class ForwardMode {
 public:
  static ForwardMode eval() { return ForwardMode(nullptr); }
  static ForwardMode train(Rng& rng) { return ForwardMode(&rng); }

  bool training() const { return rng_ != nullptr; }
  Rng& rng() const { return *rng_; }

 private:
  explicit ForwardMode(Rng* rng) : rng_(rng) {}
  Rng* rng_;
};

/// Activations recorded by a forward pass, consumed by backward().
struct ForwardCache {
  std::uint64_t head_tag = 0;
  Eigen::MatrixXd input;                 // D x n
  std::vector<Eigen::MatrixXd> pre;      // per layer, out x n
  std::vector<Eigen::MatrixXd> post;     // per layer, after act and dropout
  Eigen::MatrixXd dropout_mask;          // empty in eval mode
  Eigen::VectorXd outputs;               // n

  Eigen::Index batch_size() const { return input.cols(); }
};

/// Batched forward pass over the columns of `inputs`.
ForwardCache forward_batch(const RegressionHead& head,
                           const Eigen::MatrixXd& inputs, ForwardMode mode);

/// Single-sample forward pass.
std::pair<Grade, ForwardCache> forward(const RegressionHead& head,
                                       const Eigen::VectorXd& x,
                                       ForwardMode mode);

/// Eval-mode prediction without keeping a cache.
Grade predict(const RegressionHead& head, const Eigen::VectorXd& x);
Eigen::VectorXd predict_batch(const RegressionHead& head,
                              const Eigen::MatrixXd& inputs);

/// Reverse-mode gradient of sum_i upstream[i] * output[i] with respect to
/// the flat parameter vector. Throws CacheError if the cache does not
/// belong to the head's current parameters.
Eigen::VectorXd backward(const RegressionHead& head, const ForwardCache& cache,
                         const Eigen::VectorXd& upstream);
/// Single-sample form; the cache must hold exactly one sample.
Eigen::VectorXd backward(const RegressionHead& head, const ForwardCache& cache,
                         double upstream);

// Model file: {"architecture": {...}, "dropout_rate": r,
//              "layers": [{"weight": [[...]], "bias": [...]}, ...]}
std::string serialize_head(const RegressionHead& head);
RegressionHead parse_head(std::string_view text);
void save_head(const RegressionHead& head, const std::filesystem::path& path);
RegressionHead load_head(const std::filesystem::path& path);

}  // namespace gradekit
