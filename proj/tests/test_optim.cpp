// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "gradekit/errors.hpp"
#include "gradekit/optim.hpp"
#include "oracles.hpp"

using namespace gradekit;

namespace {

// Targets an exact affine function of the (single-frame) pooled features.
Dataset affine_dataset(PartId part, int n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(d);
  for (auto& v : w) v = 0.3 * normal(rng);
  Dataset data;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd frames(2, d);
    for (auto& v : frames.reshaped()) v = normal(rng);
    const double target = 3.5 + w.dot(mean_pool(frames));
    Submission sub;
    sub.speaker_id = "s" + std::to_string(i);
    sub.ref_part_grades[part] = target;
    sub.responses[part].push_back({frames, part});
    data.submissions.push_back(std::move(sub));
  }
  return data;
}

TrainConfig desk_config(PartId part) {
  TrainConfig cfg;
  cfg.part = part;
  cfg.batch_size = 8;
  cfg.grad_accum_steps = 2;
  cfg.dropout_rate = 0.0;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 0.0;
  cfg.hidden_width = 64;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("mse loss") {
  CHECK(mse_loss(3.0, 3.0).loss == 0.0);
  CHECK(mse_loss(3.0, 3.0).dloss_dpred == 0.0);
  CHECK(mse_loss(2.0, 3.0).loss == 1.0);
  CHECK(mse_loss(2.0, 3.0).dloss_dpred == -2.0);
  std::vector<double> p = {2, 4}, t = {3, 3};
  CHECK(mse_loss(p, t) == 1.0);
  CHECK_THROWS_AS(mse_loss(std::vector<double>{1}, t), ShapeError);
}

TEST_CASE("adamw update") {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;

  SUBCASE("first step with unit gradient") {
    cfg.weight_decay = 0.0;
    Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 1.0);
    AdamWState s = AdamWState::zeros(1);
    adamw_step(p, Eigen::VectorXd::Constant(1, 1.0), s, cfg);
    // t = 1: m_hat = g, v_hat = g^2
    CHECK(p(0) == doctest::Approx(1.0 - 0.1 * (1.0 / (1.0 + 1e-8))).epsilon(1e-15));
    CHECK(std::abs(p(0) - 0.9) < 1e-8);
    CHECK(s.t == 1);
    CHECK(s.v(0) >= 0.0);
  }
  SUBCASE("zero gradient without decay is a fixed point") {
    cfg.weight_decay = 0.0;
    Eigen::VectorXd p(3);
    p << 1.5, -2.0, 0.0;
    const Eigen::VectorXd before = p;
    AdamWState s = AdamWState::zeros(3);
    for (int i = 0; i < 10; ++i) adamw_step(p, Eigen::VectorXd::Zero(3), s, cfg);
    CHECK(p == before);
  }
  SUBCASE("zero gradient with decay shrinks by (1 - lr * wd)") {
    cfg.weight_decay = 0.01;
    Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 2.0);
    AdamWState s = AdamWState::zeros(1);
    adamw_step(p, Eigen::VectorXd::Zero(1), s, cfg);
    CHECK(std::abs(p(0) - 2.0 * (1 - 0.001)) < 1e-15);
    for (int i = 1; i < 100; ++i) adamw_step(p, Eigen::VectorXd::Zero(1), s, cfg);
    CHECK(std::abs(p(0) - 2.0 * std::pow(1 - 0.001, 100)) < 1e-12);
  }
  SUBCASE("shape mismatch") {
    Eigen::VectorXd p(2);
    AdamWState s = AdamWState::zeros(2);
    CHECK_THROWS_AS(adamw_step(p, Eigen::VectorXd::Zero(3), s, cfg), ShapeError);
  }
}

TEST_CASE("canonical per-part recipes") {
  struct Row {
    PartId part;
    HeadKind kind;
    int batch, accum;
    double dropout, lr;
    int epochs;
  };
  const Row table[] = {
      {PartId::P1, HeadKind::Shallow, 16, 2, 0.1, 5e-5, 2},
      {PartId::P2, HeadKind::Deep, 16, 2, 0.5, 1e-6, 3},
      {PartId::P3, HeadKind::Deep, 8, 4, 0.5, 1e-5, 2},
      {PartId::P4, HeadKind::Deep, 8, 4, 0.5, 1e-5, 2},
      {PartId::P5, HeadKind::Shallow, 8, 2, 0.1, 5e-5, 1},
  };
  for (const auto& r : table) {
    TrainConfig cfg = canonical_config(r.part);
    CHECK(cfg.part == r.part);
    CHECK(cfg.architecture_kind == r.kind);
    CHECK(cfg.batch_size == r.batch);
    CHECK(cfg.grad_accum_steps == r.accum);
    CHECK(cfg.dropout_rate == r.dropout);
    CHECK(cfg.learning_rate == r.lr);
    CHECK(cfg.epochs == r.epochs);
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 0.999);
    CHECK(cfg.epsilon == 1e-8);
    CHECK(cfg.weight_decay == 0.01);
    CHECK(cfg.effective_batch() == r.batch * r.accum);
  }
}

TEST_CASE("config json") {
  TrainConfig cfg = canonical_config(PartId::P3);
  cfg.seed = 1234567890123ULL;
  cfg.activation = Activation::Tanh;
  CHECK(parse_config(serialize_config(cfg), TrainConfig{}) == cfg);

  TrainConfig partial = parse_config(R"({"learning_rate": 0.002, "epochs": 7})", cfg);
  CHECK(partial.learning_rate == 0.002);
  CHECK(partial.epochs == 7);
  CHECK(partial.batch_size == cfg.batch_size);

  CHECK_THROWS_AS(parse_config(R"({"batch_size": 0})", cfg), DataError);
  CHECK_THROWS_AS(parse_config("[1]", cfg), ParseError);
  CHECK_THROWS_AS(parse_config(R"({"betas": [0.9]})", cfg), ParseError);
}

TEST_CASE("gradient accumulation equals one large batch") {
  Dataset data = affine_dataset(PartId::P1, 24, 6, 3);
  PartSamples samples = collect_samples(data, PartId::P1);
  HeadArchitecture arch;
  arch.input_dim = 6;
  arch.hidden_width = 32;
  RegressionHead head = init_head(arch, 9);
  std::vector<Eigen::Index> all(24);
  std::iota(all.begin(), all.end(), 0);
  for (int k : {2, 3, 4}) {
    const int b = 24 / k;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(head.parameters().size());
    for (int i = 0; i < k; ++i)
      acc += batch_gradient(head, samples, std::span(all).subspan(i * b, b), nullptr);
    acc /= k;
    Eigen::VectorXd full = batch_gradient(head, samples, all, nullptr);
    CHECK((acc - full).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("batch gradient is the gradient of the mean squared error") {
  Dataset data = affine_dataset(PartId::P2, 5, 4, 8);
  PartSamples samples = collect_samples(data, PartId::P2);
  HeadArchitecture arch;
  arch.input_dim = 4;
  arch.hidden_width = 10;
  RegressionHead head = init_head(arch, 2);
  std::vector<Eigen::Index> cols = {0, 1, 2, 3, 4};
  Eigen::VectorXd analytic = batch_gradient(head, samples, cols, nullptr);
  auto loss = [&](const RegressionHead& h) {
    Eigen::VectorXd out = predict_batch(h, samples.inputs);
    return (out - samples.targets).squaredNorm() / 5.0;
  };
  Eigen::VectorXd numeric(analytic.size());
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    RegressionHead h = head;
    const double p = h.parameters()(i), step = 1e-6;
    h.mutable_parameters()(i) = p + step;
    const double up = loss(h);
    h.mutable_parameters()(i) = p - step;
    numeric(i) = (up - loss(h)) / (2 * step);
  }
  CHECK(oracle::max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("training fits a realizable affine target") {
  Dataset data = affine_dataset(PartId::P1, 64, 4, 21);
  TrainConfig cfg = desk_config(PartId::P1);
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.grad_accum_steps = 1;
  cfg.learning_rate = 3e-3;
  cfg.hidden_width = 768;
  TrainResult result = train(data, cfg);
  REQUIRE(result.loss_history.size() == 200);
  PartSamples samples = collect_samples(data, PartId::P1);
  const double mse = (predict_batch(result.head, samples.inputs) - samples.targets).squaredNorm() /
                     static_cast<double>(samples.targets.size());
  CHECK(mse < 1e-3);
}

TEST_CASE("training loss is non-increasing after the first epoch") {
  Dataset data = affine_dataset(PartId::P1, 128, 4, 22);
  TrainConfig cfg = desk_config(PartId::P1);
  cfg.learning_rate = 2e-4;
  cfg.epochs = 50;
  TrainResult result = train(data, cfg);
  int violations = 0;
  for (std::size_t e = 2; e < result.loss_history.size(); ++e)
    violations += result.loss_history[e] > result.loss_history[e - 1];
  CHECK(violations <= 1);
}

TEST_CASE("training is deterministic") {
  Dataset data = affine_dataset(PartId::P3, 40, 5, 23);
  TrainConfig cfg = desk_config(PartId::P3);
  cfg.dropout_rate = 0.3;
  cfg.epochs = 3;
  TrainResult a = train(data, cfg), b = train(data, cfg);
  CHECK(a.head == b.head);
  CHECK(a.loss_history == b.loss_history);
  cfg.seed += 1;
  CHECK_FALSE(train(data, cfg).head == a.head);
}

TEST_CASE("zero learning rate leaves the initial weights") {
  Dataset data = affine_dataset(PartId::P1, 30, 4, 24);
  TrainConfig cfg = desk_config(PartId::P1);
  cfg.learning_rate = 0.0;
  cfg.dropout_rate = 0.1;
  cfg.epochs = 2;
  TrainResult r = train(data, cfg);
  CHECK(r.head == init_head(architecture_for(cfg, 4), cfg.seed, cfg.dropout_rate));
}

TEST_CASE("training errors") {
  Dataset data = affine_dataset(PartId::P1, 10, 4, 25);
  TrainConfig cfg = desk_config(PartId::P2);
  CHECK_THROWS_AS(train(data, cfg), EmptyDataset);

  cfg = desk_config(PartId::P1);
  cfg.learning_rate = 1e300;
  cfg.epochs = 5;
  CHECK_THROWS_AS(train(data, cfg), DivergedError);

  cfg = desk_config(PartId::P1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(data, cfg), DataError);
}

TEST_CASE("last incomplete batch is kept") {
  // 10 samples, effective batch 8: two optimizer steps per epoch.
  Dataset data = affine_dataset(PartId::P1, 10, 3, 26);
  TrainConfig cfg = desk_config(PartId::P1);
  cfg.batch_size = 4;
  cfg.grad_accum_steps = 2;
  cfg.epochs = 1;
  TrainResult r = train(data, cfg);
  CHECK(r.loss_history.size() == 1);
  CHECK(std::isfinite(r.loss_history[0]));
}
