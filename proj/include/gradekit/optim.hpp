// SPDX-License-Identifier: Apache-2.0
/**
 * @file   optim.hpp
 * @brief  MSE loss, AdamW and the mini-batch training loop.
 *
 * One optimizer step consumes `grad_accum_steps` micro-batches of
 * `batch_size` pooled responses. Each micro-batch contributes the gradient
 * of its mean squared error divided by the number of micro-batches in the
 * step, so the step is the gradient of the mean loss over the effective
 * batch whatever the (batch_size, grad_accum_steps) factorization.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gradekit/core.hpp"
#include "gradekit/net.hpp"

namespace gradekit {

struct TrainConfig {
  PartId part = PartId::P1;
  HeadKind architecture_kind = HeadKind::Shallow;
  int batch_size = 16;
  int grad_accum_steps = 2;
  double dropout_rate = 0.1;
  double learning_rate = 5e-5;
  int epochs = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  Activation activation = Activation::ReLU;
  Eigen::Index hidden_width = 768;
  Eigen::Index bottleneck_width = 128;

  int effective_batch() const { return batch_size * grad_accum_steps; }
  /// Throws DataError on non-positive counts or rates outside their domain.
  void check() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Per-part recipes: (kind, batch, accum, dropout, lr, epochs).
TrainConfig canonical_config(PartId part);

/// JSON mirror of TrainConfig. Parsing starts from `base` and overrides
/// only the fields present in the document.
std::string serialize_config(const TrainConfig& cfg);
TrainConfig parse_config(std::string_view text, const TrainConfig& base);

struct LossAndGrad {
  double loss;
  double dloss_dpred;
};

/// Squared error and its derivative with respect to the prediction.
LossAndGrad mse_loss(Grade pred, Grade target);
/// Mean squared error over a batch.
double mse_loss(std::span<const Grade> preds, std::span<const Grade> targets);

struct AdamWState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;

  static AdamWState zeros(Eigen::Index size);
};

/// One AdamW update with bias correction and decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
void adamw_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
                AdamWState& state, const TrainConfig& cfg);

/// Pooled inputs and targets for one part: one column/entry per response.
struct PartSamples {
  Eigen::MatrixXd inputs;   // D x n
  Eigen::VectorXd targets;  // n
};

/// Pools every response of `part` in the dataset (submission order, then
/// response order). Throws EmptyDataset if there are none.
PartSamples collect_samples(const Dataset& dataset, PartId part);

/// Gradient of the mean squared error over the given sample columns,
/// evaluated with dropout disabled when `rng` is null.
Eigen::VectorXd batch_gradient(const RegressionHead& head, const PartSamples& samples,
                               std::span<const Eigen::Index> columns, Rng* rng,
                               double* mean_loss = nullptr);

struct TrainResult {
  RegressionHead head;
  std::vector<double> loss_history;  // mean training loss per epoch
};

/// Trains a head on `cfg.part`. Deterministic in (dataset, cfg).
/// Throws EmptyDataset, DivergedError.
TrainResult train(const Dataset& dataset, const TrainConfig& cfg);
/// Same, starting from an explicit initial head (architecture must match).
TrainResult train(const PartSamples& samples, const TrainConfig& cfg,
                  RegressionHead initial);

HeadArchitecture architecture_for(const TrainConfig& cfg, Eigen::Index input_dim);

}  // namespace gradekit
