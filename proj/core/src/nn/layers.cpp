#include "deepgap/nn/layers.hpp"

#include <cmath>

#include "deepgap/error.hpp"
#include "deepgap/nn/ops.hpp"

namespace deepgap::nn {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) {
    v = rng.uniform(-bound, bound);
  }
  return Tensor::from(std::move(shape), std::move(values), true);
}

ConvLayer ConvLayer::create(std::size_t in_channels, std::size_t out_channels, std::size_t n,
                            std::size_t m, Rng& rng, const std::string& name) {
  if (n % 2 == 0 || m % 2 == 0) {
    throw ConfigError("convolution kernel size must be odd, got " + std::to_string(n) + "x" +
                      std::to_string(m));
  }
  ConvLayer layer;
  layer.filters = glorot_uniform({out_channels, in_channels, n, m}, in_channels * n * m,
                                 out_channels * n * m, rng);
  layer.filters.set_name(name + ".filters");
  layer.bias = Tensor::zeros({out_channels}, true);
  layer.bias.set_name(name + ".bias");
  return layer;
}

Tensor conv2d(const Tensor& input, const ConvLayer& layer) {
  return conv2d(input, layer.filters, layer.bias);
}

ResidualUnit ResidualUnit::create(std::size_t channels, std::size_t n, std::size_t m, bool skip,
                                  Rng& rng, const std::string& name) {
  ResidualUnit unit;
  unit.conv1 = ConvLayer::create(channels, channels, n, m, rng, name + ".conv1");
  unit.conv2 = ConvLayer::create(channels, channels, n, m, rng, name + ".conv2");
  unit.skip = skip;
  return unit;
}

Tensor residual_forward(const Tensor& input, const ResidualUnit& unit) {
  const std::size_t channel_axis = input.rank() == 4 ? 1 : 0;
  if (input.rank() < 3 || input.dim(channel_axis) != unit.conv1.in_channels() ||
      unit.conv2.out_channels() != unit.conv1.in_channels()) {
    throw ShapeError("residual unit with " + std::to_string(unit.conv1.in_channels()) +
                     " channels cannot take input " + shape_string(input.shape()));
  }
  auto body = relu(conv2d(relu(conv2d(input, unit.conv1)), unit.conv2));
  return unit.skip ? add(body, input) : body;
}

DenseLayer DenseLayer::create(std::size_t in, std::size_t out, Rng& rng, const std::string& name) {
  DenseLayer layer;
  layer.weights = glorot_uniform({out, in}, in, out, rng);
  layer.weights.set_name(name + ".weights");
  layer.bias = Tensor::zeros({out}, true);
  layer.bias.set_name(name + ".bias");
  return layer;
}

Tensor dense(const Tensor& input, const DenseLayer& layer) {
  return dense(input, layer.weights, layer.bias);
}

EmbeddingTable EmbeddingTable::create(std::size_t vocabulary_size, std::size_t dim, Rng& rng,
                                      const std::string& name) {
  EmbeddingTable table;
  table.weights = glorot_uniform({vocabulary_size, dim}, vocabulary_size, dim, rng);
  table.weights.set_name(name + ".weights");
  return table;
}

void ParameterSet::add(Tensor tensor) {
  if (!tensor.requires_grad()) {
    throw InvalidArgument("parameter '" + tensor.name() + "' does not require gradients");
  }
  tensors_.push_back(std::move(tensor));
}

void ParameterSet::add(const ConvLayer& layer) {
  add(layer.filters);
  add(layer.bias);
}

void ParameterSet::add(const ResidualUnit& unit) {
  add(unit.conv1);
  add(unit.conv2);
}

void ParameterSet::add(const DenseLayer& layer) {
  add(layer.weights);
  add(layer.bias);
}

void ParameterSet::add(const EmbeddingTable& table) { add(table.weights); }

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) {
    n += t.size();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& t : tensors_) {
    t.zero_grad();
  }
}

namespace {

void check_finite_grads(ParameterSet& params) {
  for (auto& t : params.tensors()) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + t.name() + "'");
      }
    }
  }
}

}  // namespace

void Sgd::step(ParameterSet& params) {
  check_finite_grads(params);
  for (auto& t : params.tensors()) {
    auto w = t.data();
    auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= lr_ * g[i];
    }
  }
  params.zero_grad();
}

void Adam::step(ParameterSet& params) {
  check_finite_grads(params);
  auto tensors = params.tensors();
  if (m_.size() != tensors.size()) {
    m_.clear();
    v_.clear();
    for (const auto& t : tensors) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto w = tensors[k].data();
    auto g = tensors[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
  params.zero_grad();
}

}  // namespace deepgap::nn
