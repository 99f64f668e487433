#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "deepgap/nn/tensor.hpp"
#include "deepgap/random.hpp"

namespace deepgap::nn {

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct ConvLayer {
  Tensor filters;  // (out, in, n, m)
  Tensor bias;     // (out)

  /// Glorot-uniform filters, zero bias. n and m must be odd.
  static ConvLayer create(std::size_t in_channels, std::size_t out_channels, std::size_t n,
                          std::size_t m, Rng& rng, const std::string& name);

  std::size_t in_channels() const { return filters.dim(1); }
  std::size_t out_channels() const { return filters.dim(0); }
};

Tensor conv2d(const Tensor& input, const ConvLayer& layer);

/// Two same-shape convolutions with an identity shortcut:
/// relu(conv2(relu(conv1(x)))) + x. With `skip` off the shortcut is
/// dropped and the unit is a plain two-layer conv stack of the same shape.
struct ResidualUnit {
  ConvLayer conv1;
  ConvLayer conv2;
  bool skip = true;

  static ResidualUnit create(std::size_t channels, std::size_t n, std::size_t m, bool skip,
                             Rng& rng, const std::string& name);
};

Tensor residual_forward(const Tensor& input, const ResidualUnit& unit);

struct DenseLayer {
  Tensor weights;  // (out, in)
  Tensor bias;     // (out)

  static DenseLayer create(std::size_t in, std::size_t out, Rng& rng, const std::string& name);
};

Tensor dense(const Tensor& input, const DenseLayer& layer);

struct EmbeddingTable {
  Tensor weights;  // (vocabulary_size, dim)

  static EmbeddingTable create(std::size_t vocabulary_size, std::size_t dim, Rng& rng,
                               const std::string& name);
  std::size_t vocabulary_size() const { return weights.dim(0); }
  std::size_t dim() const { return weights.dim(1); }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered, named trainable tensors.
class ParameterSet {
 public:
  void add(Tensor tensor);
  void add(const ConvLayer& layer);
  void add(const ResidualUnit& unit);
  void add(const DenseLayer& layer);
  void add(const EmbeddingTable& table);

  std::span<Tensor> tensors() { return tensors_; }
  std::span<const Tensor> tensors() const { return tensors_; }
  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<Tensor> tensors_;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update from the current gradients, then clears them.
  /// Throws NumericError naming the first parameter with a non-finite
  /// gradient; nothing is updated in that case.
  virtual void step(ParameterSet& params) = 0;
};

/// theta <- theta - lr * grad
class Sgd : public Optimizer {
 public:
  explicit Sgd(double learning_rate) : lr_(learning_rate) {}
  void step(ParameterSet& params) override;

 private:
  double lr_;
};

class Adam : public Optimizer {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(ParameterSet& params) override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace deepgap::nn
