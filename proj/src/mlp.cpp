#include "gdkd/mlp.hpp"

#include <cmath>
#include <random>

namespace gdkd {

namespace {

double activate(double v, Activation a) { return a == Activation::Relu ? (v > 0.0 ? v : 0.0) : std::tanh(v); }

double activate_grad(double pre, Activation a) {
  if (a == Activation::Relu) return pre > 0.0 ? 1.0 : 0.0;
  const double th = std::tanh(pre);
  return 1.0 - th * th;
}

// out = in · Wᵀ + b
Matrix affine(const Matrix& in, const DenseLayer& layer) {
  Matrix out(in.rows, layer.out);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const auto x = in.row(r);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = layer.weight.data() + o * layer.in;
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * x[i];
      out.at(r, o) = acc;
    }
  }
  return out;
}

}  // namespace

void validate(const MlpSpec& spec) {
  if (spec.layer_widths.size() < 2) {
    throw Error(ErrorKind::Config, "an MLP needs at least an input and an output width");
  }
  for (std::size_t w : spec.layer_widths) {
    if (w == 0) throw Error(ErrorKind::Config, "layer widths must be positive");
  }
  if (spec.layer_widths.back() < 2) throw Error(ErrorKind::Config, "need at least 2 output classes");
}

Mlp::Mlp(const MlpSpec& spec) : spec_(spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    DenseLayer layer;
    layer.in = spec.layer_widths[l];
    layer.out = spec.layer_widths[l + 1];
    const double fan_in = static_cast<double>(layer.in);
    const double fan_out = static_cast<double>(layer.out);
    const double bound = spec.activation == Activation::Relu ? std::sqrt(6.0 / fan_in)
                                                             : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weight.resize(layer.in * layer.out);
    for (double& w : layer.weight) w = dist(rng);
    layer.bias.assign(layer.out, 0.0);
    layers_.push_back(std::move(layer));
  }
}

Vec Mlp::logits(std::span<const double> x) const {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.data.begin());
  return logits(m).data;
}

Matrix Mlp::logits(const Matrix& x) const {
  Trace trace;
  return forward(x, trace);
}

Matrix Mlp::forward(const Matrix& x, Trace& trace) const {
  if (x.cols != input_dim()) {
    throw Error(ErrorKind::Shape, "input has " + std::to_string(x.cols) + " features, network expects " +
                                      std::to_string(input_dim()));
  }
  trace.inputs.clear();
  trace.pre.clear();
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = affine(h, layers_[l]);
    trace.inputs.push_back(std::move(h));
    const bool last = l + 1 == layers_.size();
    if (last) {
      trace.pre.push_back(z);
      return z;
    }
    h = z;
    for (double& v : h.data) v = activate(v, spec_.activation);
    trace.pre.push_back(std::move(z));
  }
  return h;  // unreachable: at least one layer
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& layer : layers_) {
    g.weight.emplace_back(layer.weight.size(), 0.0);
    g.bias.emplace_back(layer.bias.size(), 0.0);
  }
  return g;
}

MlpGradients Mlp::backward(const Trace& trace, const Matrix& dlogits) const {
  MlpGradients g = zero_gradients();
  Matrix delta = dlogits;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const DenseLayer& layer = layers_[l];
    const Matrix& in = trace.inputs[l];
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const auto x = in.row(r);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta.at(r, o);
        g.bias[l][o] += d;
        double* gw = g.weight[l].data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) gw[i] += d * x[i];
      }
    }
    if (l == 0) break;
    Matrix prev(delta.rows, layer.in);
    for (std::size_t r = 0; r < delta.rows; ++r) {
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta.at(r, o);
        const double* w = layer.weight.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) prev.at(r, i) += d * w[i];
      }
    }
    const Matrix& pre = trace.pre[l - 1];
    for (std::size_t k = 0; k < prev.data.size(); ++k) {
      prev.data[k] *= activate_grad(pre.data[k], spec_.activation);
    }
    delta = std::move(prev);
  }
  return g;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json j;
  j["layer_widths"] = spec_.layer_widths;
  j["activation"] = spec_.activation == Activation::Relu ? "relu" : "tanh";
  j["seed"] = spec_.seed;
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : layers_) {
    j["layers"].push_back({{"weight", layer.weight}, {"bias", layer.bias}});
  }
  return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  try {
    MlpSpec spec;
    spec.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
    const auto act = j.at("activation").get<std::string>();
    if (act != "relu" && act != "tanh") throw Error(ErrorKind::Config, "unknown activation " + act);
    spec.activation = act == "relu" ? Activation::Relu : Activation::Tanh;
    spec.seed = j.at("seed").get<std::uint64_t>();
    Mlp net(spec);
    const auto& layers = j.at("layers");
    if (layers.size() != net.layers_.size()) throw Error(ErrorKind::Config, "layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto w = layers[l].at("weight").get<Vec>();
      auto b = layers[l].at("bias").get<Vec>();
      if (w.size() != net.layers_[l].weight.size() || b.size() != net.layers_[l].bias.size()) {
        throw Error(ErrorKind::Config, "parameter shape mismatch in layer " + std::to_string(l));
      }
      net.layers_[l].weight = std::move(w);
      net.layers_[l].bias = std::move(b);
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("model checkpoint: ") + e.what());
  }
}

}  // namespace gdkd
