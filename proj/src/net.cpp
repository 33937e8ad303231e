// SPDX-License-Identifier: Apache-2.0
#include "gradekit/net.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "gradekit/errors.hpp"
#include "gradekit/format.hpp"

namespace gradekit {

namespace {

std::uint64_t next_tag() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void apply_activation(Activation activation, Eigen::MatrixXd& z) {
  switch (activation) {
    case Activation::ReLU:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      z = z.array().tanh();
      break;
    case Activation::GELU:
      z = z.unaryExpr([](double v) {
        return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      });
      break;
  }
}

// Elementwise derivative of the activation evaluated at the pre-activation.
Eigen::MatrixXd activation_derivative(Activation activation,
                                      const Eigen::MatrixXd& z) {
  switch (activation) {
    case Activation::ReLU:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Tanh:
      return z.unaryExpr([](double v) {
        double t = std::tanh(v);
        return 1.0 - t * t;
      });
    case Activation::GELU:
      return z.unaryExpr([](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf =
            std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      });
  }
  return {};
}

}  // namespace

std::string_view to_string(HeadKind kind) {
  return kind == HeadKind::Shallow ? "Shallow" : "Deep";
}

HeadKind parse_head_kind(std::string_view text) {
  if (text == "Shallow" || text == "shallow") return HeadKind::Shallow;
  if (text == "Deep" || text == "deep") return HeadKind::Deep;
  throw ParseError("unknown head kind '" + std::string(text) + "'");
}

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::GELU: return "gelu";
  }
  return "?";
}

Activation parse_activation(std::string_view text) {
  for (Activation a : {Activation::ReLU, Activation::Tanh, Activation::GELU})
    if (to_string(a) == text) return a;
  throw ParseError("unknown activation '" + std::string(text) + "'");
}

std::vector<LayerShape> HeadArchitecture::layer_plan() const {
  const Eigen::Index h = hidden_width;
  if (kind == HeadKind::Shallow) return {{input_dim, h, true}, {h, 1, false}};
  return {{input_dim, h, true},
          {h, h, true},
          {h, h, true},
          {h, bottleneck_width, true},
          {bottleneck_width, 1, false}};
}

std::size_t HeadArchitecture::dropout_layer() const {
  return kind == HeadKind::Shallow ? 0 : 2;
}

Eigen::Index HeadArchitecture::num_parameters() const {
  Eigen::Index n = 0;
  for (const auto& s : layer_plan()) n += s.out * s.in + s.out;
  return n;
}

Eigen::VectorXd mean_pool(const Eigen::MatrixXd& frames) {
  if (frames.rows() == 0) throw EmptySequence("cannot pool an empty sequence");
  return frames.colwise().mean().transpose();
}

Eigen::VectorXd mean_pool(const FrameSequence& seq) { return mean_pool(seq.frames); }

// ---------------------------------------------------------------------------

RegressionHead::RegressionHead(HeadArchitecture architecture, double dropout_rate)
    : arch_(architecture), dropout_rate_(dropout_rate), tag_(next_tag()) {
  if (arch_.input_dim < 1 || arch_.hidden_width < 1 || arch_.bottleneck_width < 1)
    throw ShapeError("layer widths must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw DataError("dropout rate must lie in [0, 1)");
  shapes_ = arch_.layer_plan();
  Eigen::Index offset = 0;
  for (const auto& s : shapes_) {
    offsets_.push_back(offset);
    offset += s.out * s.in + s.out;
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

Eigen::Index RegressionHead::bias_offset(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return offsets_[layer] + s.out * s.in;
}

Eigen::Map<const Eigen::MatrixXd> RegressionHead::weight(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {params_.data() + offsets_[layer], s.out, s.in};
}

Eigen::Map<const Eigen::VectorXd> RegressionHead::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), shapes_.at(layer).out};
}

Eigen::Map<Eigen::MatrixXd> RegressionHead::mutable_weight(std::size_t layer) {
  touch();
  const auto& s = shapes_.at(layer);
  return {params_.data() + offsets_[layer], s.out, s.in};
}

Eigen::Map<Eigen::VectorXd> RegressionHead::mutable_bias(std::size_t layer) {
  touch();
  return {params_.data() + bias_offset(layer), shapes_.at(layer).out};
}

Eigen::VectorXd& RegressionHead::mutable_parameters() {
  touch();
  return params_;
}

void RegressionHead::touch() { tag_ = next_tag(); }

bool RegressionHead::operator==(const RegressionHead& other) const {
  return arch_ == other.arch_ && dropout_rate_ == other.dropout_rate_ &&
         params_.size() == other.params_.size() && params_ == other.params_;
}

RegressionHead init_head(const HeadArchitecture& architecture, std::uint64_t seed,
                         double dropout_rate) {
  RegressionHead head(architecture, dropout_rate);
  Rng rng(seed);
  for (std::size_t l = 0; l < head.num_layers(); ++l) {
    const auto& s = head.layer_shape(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = head.mutable_weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  }
  return head;
}

// ---------------------------------------------------------------------------

ForwardCache forward_batch(const RegressionHead& head, const Eigen::MatrixXd& inputs,
                           ForwardMode mode) {
  const auto& arch = head.architecture();
  if (inputs.rows() != arch.input_dim)
    throw ShapeError("input width " + std::to_string(inputs.rows()) +
                     " does not match head input_dim " +
                     std::to_string(arch.input_dim));
  ForwardCache cache;
  cache.head_tag = head.state_tag();
  cache.input = inputs;
  const std::size_t n_layers = head.num_layers();
  const std::size_t drop_at = arch.dropout_layer();
  cache.pre.reserve(n_layers);
  cache.post.reserve(n_layers);

  const Eigen::MatrixXd* previous = &cache.input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd z = head.weight(l) * *previous;
    z.colwise() += head.bias(l);
    Eigen::MatrixXd a = z;
    if (head.layer_shape(l).activated) apply_activation(arch.activation, a);
    if (l == drop_at && mode.training()) {
      const double rate = head.dropout_rate();
      cache.dropout_mask.resize(a.rows(), a.cols());
      if (rate == 0.0) {
        cache.dropout_mask.setOnes();
      } else {
        std::bernoulli_distribution keep(1.0 - rate);
        const double scale = 1.0 / (1.0 - rate);
        Rng& rng = mode.rng();
        for (Eigen::Index j = 0; j < a.cols(); ++j)
          for (Eigen::Index i = 0; i < a.rows(); ++i)
            cache.dropout_mask(i, j) = keep(rng) ? scale : 0.0;
      }
      a = a.cwiseProduct(cache.dropout_mask);
    }
    cache.pre.push_back(std::move(z));
    cache.post.push_back(std::move(a));
    previous = &cache.post.back();
  }
  cache.outputs = cache.post.back().row(0).transpose();
  return cache;
}

std::pair<Grade, ForwardCache> forward(const RegressionHead& head,
                                       const Eigen::VectorXd& x, ForwardMode mode) {
  ForwardCache cache = forward_batch(head, x, mode);
  const Grade score = cache.outputs(0);
  return {score, std::move(cache)};
}

Eigen::VectorXd predict_batch(const RegressionHead& head, const Eigen::MatrixXd& inputs) {
  const auto& arch = head.architecture();
  if (inputs.rows() != arch.input_dim)
    throw ShapeError("input width " + std::to_string(inputs.rows()) +
                     " does not match head input_dim " +
                     std::to_string(arch.input_dim));
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < head.num_layers(); ++l) {
    Eigen::MatrixXd z = head.weight(l) * a;
    z.colwise() += head.bias(l);
    if (head.layer_shape(l).activated) apply_activation(arch.activation, z);
    a = std::move(z);
  }
  return a.row(0).transpose();
}

Grade predict(const RegressionHead& head, const Eigen::VectorXd& x) {
  return predict_batch(head, x)(0);
}

Eigen::VectorXd backward(const RegressionHead& head, const ForwardCache& cache,
                         const Eigen::VectorXd& upstream) {
  if (cache.head_tag != head.state_tag())
    throw CacheError("forward cache does not match the head's current parameters");
  const std::size_t n_layers = head.num_layers();
  if (cache.pre.size() != n_layers || cache.post.size() != n_layers)
    throw CacheError("forward cache has the wrong number of layers");
  if (upstream.size() != cache.batch_size())
    throw ShapeError("upstream gradient size does not match the cached batch");

  const auto& arch = head.architecture();
  const std::size_t drop_at = arch.dropout_layer();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(head.parameters().size());

  // Gradient with respect to the output of layer l (after act and dropout).
  Eigen::MatrixXd d_out = upstream.transpose();
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& shape = head.layer_shape(l);
    Eigen::MatrixXd d_z = std::move(d_out);
    if (l == drop_at && cache.dropout_mask.size() > 0)
      d_z = d_z.cwiseProduct(cache.dropout_mask);
    if (shape.activated)
      d_z = d_z.cwiseProduct(activation_derivative(arch.activation, cache.pre[l]));

    const Eigen::MatrixXd& layer_input = l == 0 ? cache.input : cache.post[l - 1];
    Eigen::Map<Eigen::MatrixXd> d_w(grad.data() + head.weight_offset(l), shape.out,
                                    shape.in);
    Eigen::Map<Eigen::VectorXd> d_b(grad.data() + head.bias_offset(l), shape.out);
    d_w.noalias() = d_z * layer_input.transpose();
    d_b = d_z.rowwise().sum();
    if (l > 0) d_out = head.weight(l).transpose() * d_z;
  }
  return grad;
}

Eigen::VectorXd backward(const RegressionHead& head, const ForwardCache& cache,
                         double upstream) {
  if (cache.batch_size() != 1)
    throw CacheError("scalar upstream gradient needs a single-sample cache");
  return backward(head, cache, Eigen::VectorXd::Constant(1, upstream));
}

// ---------------------------------------------------------------------------

std::string serialize_head(const RegressionHead& head) {
  const auto& arch = head.architecture();
  std::string out = "{\"architecture\": {\"kind\": \"";
  out += to_string(arch.kind);
  out += "\", \"input_dim\": " + std::to_string(arch.input_dim);
  out += ", \"activation\": \"";
  out += to_string(arch.activation);
  out += "\", \"hidden_width\": " + std::to_string(arch.hidden_width);
  out += ", \"bottleneck_width\": " + std::to_string(arch.bottleneck_width);
  out += "},\n \"dropout_rate\": " + format_real(head.dropout_rate());
  out += ",\n \"layers\": [";
  for (std::size_t l = 0; l < head.num_layers(); ++l) {
    out += l ? ",\n  " : "\n  ";
    out += "{\"weight\": [";
    auto w = head.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      out += i ? ", [" : "[";
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        if (j) out += ", ";
        out += format_real(w(i, j));
      }
      out += ']';
    }
    out += "], \"bias\": [";
    auto b = head.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      if (i) out += ", ";
      out += format_real(b(i));
    }
    out += "]}";
  }
  out += "\n ]}\n";
  return out;
}

RegressionHead parse_head(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
    const json& a = doc.at("architecture");
    HeadArchitecture arch;
    arch.kind = parse_head_kind(a.at("kind").get<std::string>());
    arch.input_dim = a.at("input_dim").get<Eigen::Index>();
    arch.activation = parse_activation(a.value("activation", std::string("relu")));
    arch.hidden_width = a.value("hidden_width", Eigen::Index{768});
    arch.bottleneck_width = a.value("bottleneck_width", Eigen::Index{128});
    RegressionHead head(arch, doc.at("dropout_rate").get<double>());
    const json& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() != head.num_layers())
      throw ShapeError("model file has the wrong number of layers");
    for (std::size_t l = 0; l < head.num_layers(); ++l) {
      const auto& shape = head.layer_shape(l);
      const json& wj = layers[l].at("weight");
      const json& bj = layers[l].at("bias");
      if (wj.size() != static_cast<std::size_t>(shape.out) ||
          bj.size() != static_cast<std::size_t>(shape.out))
        throw ShapeError("layer " + std::to_string(l) + " has the wrong shape");
      auto w = head.mutable_weight(l);
      auto b = head.mutable_bias(l);
      for (Eigen::Index i = 0; i < shape.out; ++i) {
        const json& row = wj[static_cast<std::size_t>(i)];
        if (row.size() != static_cast<std::size_t>(shape.in))
          throw ShapeError("layer " + std::to_string(l) + " has the wrong shape");
        for (Eigen::Index j = 0; j < shape.in; ++j)
          w(i, j) = row[static_cast<std::size_t>(j)].get<double>();
        b(i) = bj[static_cast<std::size_t>(i)].get<double>();
      }
    }
    if (!head.parameters().allFinite()) throw InvalidScore("non-finite model parameter");
    return head;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  }
}

void save_head(const RegressionHead& head, const std::filesystem::path& path) {
  write_file(path, serialize_head(head));
}

RegressionHead load_head(const std::filesystem::path& path) {
  return parse_head(read_file(path));
}

}  // namespace gradekit
