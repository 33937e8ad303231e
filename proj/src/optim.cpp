// SPDX-License-Identifier: Apache-2.0
#include "gradekit/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "gradekit/errors.hpp"

namespace gradekit {

void TrainConfig::check() const {
  if (batch_size < 1) throw DataError("batch_size must be positive");
  if (grad_accum_steps < 1) throw DataError("grad_accum_steps must be positive");
  if (epochs < 1) throw DataError("epochs must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw DataError("learning_rate must be finite and non-negative");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw DataError("dropout_rate must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw DataError("betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw DataError("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw DataError("weight_decay must be non-negative");
  if (hidden_width < 1 || bottleneck_width < 1)
    throw DataError("layer widths must be positive");
}

TrainConfig canonical_config(PartId part) {
  struct Recipe {
    HeadKind kind;
    int batch;
    int accum;
    double dropout;
    double lr;
    int epochs;
  };
  static constexpr std::array<Recipe, kNumParts> recipes = {{
      {HeadKind::Shallow, 16, 2, 0.1, 5e-5, 2},
      {HeadKind::Deep, 16, 2, 0.5, 1e-6, 3},
      {HeadKind::Deep, 8, 4, 0.5, 1e-5, 2},
      {HeadKind::Deep, 8, 4, 0.5, 1e-5, 2},
      {HeadKind::Shallow, 8, 2, 0.1, 5e-5, 1},
  }};
  const Recipe& r = recipes[index_of(part)];
  TrainConfig cfg;
  cfg.part = part;
  cfg.architecture_kind = r.kind;
  cfg.batch_size = r.batch;
  cfg.grad_accum_steps = r.accum;
  cfg.dropout_rate = r.dropout;
  cfg.learning_rate = r.lr;
  cfg.epochs = r.epochs;
  return cfg;
}

std::string serialize_config(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["part"] = std::string(to_string(cfg.part));
  j["architecture_kind"] = std::string(to_string(cfg.architecture_kind));
  j["batch_size"] = cfg.batch_size;
  j["grad_accum_steps"] = cfg.grad_accum_steps;
  j["dropout_rate"] = cfg.dropout_rate;
  j["learning_rate"] = cfg.learning_rate;
  j["epochs"] = cfg.epochs;
  j["betas"] = {cfg.beta1, cfg.beta2};
  j["epsilon"] = cfg.epsilon;
  j["weight_decay"] = cfg.weight_decay;
  j["seed"] = cfg.seed;
  j["activation"] = std::string(to_string(cfg.activation));
  j["hidden_width"] = cfg.hidden_width;
  j["bottleneck_width"] = cfg.bottleneck_width;
  return j.dump(2) + "\n";
}

TrainConfig parse_config(std::string_view text, const TrainConfig& base) {
  using nlohmann::json;
  TrainConfig cfg = base;
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ParseError("config must be a JSON object");
    if (j.contains("part")) cfg.part = parse_part(j["part"].get<std::string>());
    if (j.contains("architecture_kind"))
      cfg.architecture_kind = parse_head_kind(j["architecture_kind"].get<std::string>());
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("grad_accum_steps")) cfg.grad_accum_steps = j["grad_accum_steps"].get<int>();
    if (j.contains("dropout_rate")) cfg.dropout_rate = j["dropout_rate"].get<double>();
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
    if (j.contains("betas")) {
      const json& betas = j["betas"];
      if (!betas.is_array() || betas.size() != 2)
        throw ParseError("betas must be a two-element array");
      cfg.beta1 = betas[0].get<double>();
      cfg.beta2 = betas[1].get<double>();
    }
    if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("activation"))
      cfg.activation = parse_activation(j["activation"].get<std::string>());
    if (j.contains("hidden_width")) cfg.hidden_width = j["hidden_width"].get<Eigen::Index>();
    if (j.contains("bottleneck_width"))
      cfg.bottleneck_width = j["bottleneck_width"].get<Eigen::Index>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

LossAndGrad mse_loss(Grade pred, Grade target) {
  const double r = pred - target;
  return {r * r, 2.0 * r};
}

double mse_loss(std::span<const Grade> preds, std::span<const Grade> targets) {
  if (preds.size() != targets.size() || preds.empty())
    throw ShapeError("mse_loss needs equal, non-empty batches");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += mse_loss(preds[i], targets[i]).loss;
  return sum / static_cast<double>(preds.size());
}

AdamWState AdamWState::zeros(Eigen::Index size) {
  return {Eigen::VectorXd::Zero(size), Eigen::VectorXd::Zero(size), 0};
}

void adamw_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
                AdamWState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw ShapeError("adamw_step: parameter, gradient and state sizes differ");
  state.t += 1;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  state.m = b1 * state.m + (1.0 - b1) * grads;
  state.v = b2 * state.v + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  const double lr = cfg.learning_rate;
  const double wd = cfg.weight_decay;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double m_hat = state.m(i) / c1;
    const double v_hat = state.v(i) / c2;
    params(i) -= lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + wd * params(i));
  }
}

PartSamples collect_samples(const Dataset& dataset, PartId part) {
  std::vector<Eigen::VectorXd> pooled;
  std::vector<double> targets;
  for (const auto& sub : dataset.submissions) {
    auto it = sub.responses.find(part);
    if (it == sub.responses.end()) continue;
    const Grade target = sub.ref_part_grades.at(part);
    for (const auto& seq : it->second) {
      pooled.push_back(mean_pool(seq));
      targets.push_back(target);
    }
  }
  if (pooled.empty())
    throw EmptyDataset("no responses for part " + std::string(to_string(part)));
  const Eigen::Index dim = pooled.front().size();
  PartSamples samples;
  samples.inputs.resize(dim, static_cast<Eigen::Index>(pooled.size()));
  samples.targets.resize(static_cast<Eigen::Index>(pooled.size()));
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (pooled[i].size() != dim)
      throw ShapeError("responses of part " + std::string(to_string(part)) +
                       " have different embedding widths");
    samples.inputs.col(static_cast<Eigen::Index>(i)) = pooled[i];
    samples.targets(static_cast<Eigen::Index>(i)) = targets[i];
  }
  return samples;
}

Eigen::VectorXd batch_gradient(const RegressionHead& head, const PartSamples& samples,
                               std::span<const Eigen::Index> columns, Rng* rng,
                               double* mean_loss) {
  if (columns.empty()) throw ShapeError("empty batch");
  std::vector<Eigen::Index> cols(columns.begin(), columns.end());
  const Eigen::MatrixXd inputs = samples.inputs(Eigen::all, cols);
  const Eigen::VectorXd targets = samples.targets(cols);
  const ForwardMode mode = rng ? ForwardMode::train(*rng) : ForwardMode::eval();
  ForwardCache cache = forward_batch(head, inputs, mode);
  const double m = static_cast<double>(cols.size());
  const Eigen::VectorXd residual = cache.outputs - targets;
  if (mean_loss) *mean_loss = residual.squaredNorm() / m;
  // d(mean r^2)/d out_i = 2 r_i / m
  return backward(head, cache, Eigen::VectorXd(2.0 * residual / m));
}

HeadArchitecture architecture_for(const TrainConfig& cfg, Eigen::Index input_dim) {
  HeadArchitecture arch;
  arch.kind = cfg.architecture_kind;
  arch.input_dim = input_dim;
  arch.activation = cfg.activation;
  arch.hidden_width = cfg.hidden_width;
  arch.bottleneck_width = cfg.bottleneck_width;
  return arch;
}

TrainResult train(const PartSamples& samples, const TrainConfig& cfg,
                  RegressionHead initial) {
  cfg.check();
  const Eigen::Index n = samples.inputs.cols();
  if (n == 0) throw EmptyDataset("no training samples");
  if (initial.architecture().input_dim != samples.inputs.rows())
    throw ShapeError("initial head does not match the sample width");

  Rng shuffle_rng = derived_rng(cfg.seed, 1);
  Rng dropout_rng = derived_rng(cfg.seed, 2);

  TrainResult result{std::move(initial), {}};
  RegressionHead& head = result.head;
  AdamWState state = AdamWState::zeros(head.parameters().size());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const std::size_t total = order.size();
  const std::size_t micro = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t per_step = static_cast<std::size_t>(cfg.effective_batch());
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < total; start += per_step) {
      const std::size_t stop = std::min(start + per_step, total);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(head.parameters().size());
      int micro_batches = 0;
      for (std::size_t mb = start; mb < stop; mb += micro) {
        const std::size_t mb_stop = std::min(mb + micro, stop);
        std::span<const Eigen::Index> cols(order.data() + mb, mb_stop - mb);
        double loss = 0.0;
        grad += batch_gradient(head, samples, cols, &dropout_rng, &loss);
        if (!std::isfinite(loss))
          throw DivergedError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step + 1));
        loss_sum += loss * static_cast<double>(mb_stop - mb);
        ++micro_batches;
      }
      grad /= static_cast<double>(micro_batches);
      adamw_step(head.mutable_parameters(), grad, state, cfg);
      ++step;
      if (!head.parameters().allFinite())
        throw DivergedError("non-finite parameters at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
    }
    result.loss_history.push_back(loss_sum / static_cast<double>(total));
  }
  return result;
}

TrainResult train(const Dataset& dataset, const TrainConfig& cfg) {
  cfg.check();
  PartSamples samples = collect_samples(dataset, cfg.part);
  RegressionHead initial = init_head(architecture_for(cfg, samples.inputs.rows()),
                                     cfg.seed, cfg.dropout_rate);
  return train(samples, cfg, std::move(initial));
}

}  // namespace gradekit
