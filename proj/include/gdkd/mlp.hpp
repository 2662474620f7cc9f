#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "gdkd/numeric.hpp"

namespace gdkd {

enum class Activation : std::uint8_t { Relu, Tanh };

struct MlpSpec {
  std::vector<std::size_t> layer_widths;  // input_dim, hidden..., C
  Activation activation = Activation::Relu;
  std::uint64_t seed = 0;
};

void validate(const MlpSpec& spec);

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  Vec weight;  // out × in, row-major
  Vec bias;    // out
};

/// Parameter-shaped gradient buffers.
struct MlpGradients {
  std::vector<Vec> weight;
  std::vector<Vec> bias;
};

/// Fully connected network with a linear output layer producing logits.
class Mlp {
 public:
  /// He-uniform weights (Xavier for tanh), zero biases, drawn from spec.seed.
  explicit Mlp(const MlpSpec& spec);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t input_dim() const noexcept { return spec_.layer_widths.front(); }
  std::size_t num_classes() const noexcept { return spec_.layer_widths.back(); }

  Vec logits(std::span<const double> x) const;
  Matrix logits(const Matrix& x) const;

  /// Pre-activations and activations of every layer for one batch.
  struct Trace {
    std::vector<Matrix> inputs;  // input to layer l (inputs[0] = x)
    std::vector<Matrix> pre;     // pre-activation output of layer l
  };

  Matrix forward(const Matrix& x, Trace& trace) const;

  /// Backpropagates dL/dlogits (batch × C) through the recorded trace.
  MlpGradients backward(const Trace& trace, const Matrix& dlogits) const;

  MlpGradients zero_gradients() const;

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

}  // namespace gdkd
