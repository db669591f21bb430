#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "biasdiag/errors.hpp"
#include "biasdiag/io.hpp"
#include "biasdiag/rng.hpp"
#include "biasdiag/tensor.hpp"

namespace biasdiag {

// ---------------------------------------------------------------------------
// A tiny configurable convolutional network with exact forward and backward
// passes. Inference is pure; training is sequential minibatch SGD with every
// random draw pinned to the seed.
// ---------------------------------------------------------------------------

enum class LayerKind { Conv, ReLU, Flatten, FullyConnected };

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  // conv
  std::size_t kernel = 0, in_channels = 0, out_channels = 0, stride = 1;
  // fully connected
  std::size_t in = 0, out = 0;

  static LayerSpec conv(std::size_t kernel, std::size_t in_ch, std::size_t out_ch,
                        std::size_t stride = 1) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.kernel = kernel;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.stride = stride;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{}; }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
  }
  static LayerSpec fc(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.in = in;
    s.out = out;
    return s;
  }
};

struct NetworkConfig {
  Shape input_shape;  // (channels, height, width)
  std::vector<LayerSpec> layers;
  std::size_t attribute_count = 0;
  // Layer index whose output is probed for attribution; must be a Conv
  // layer. Defaults to the first conv layer (higher resolution, better
  // localization).
  std::optional<std::size_t> probe_layer;
};

// All per-layer outputs of one forward pass plus the attribute scores.
// Recomputing forward from `input` reproduces every output bit-exactly.
struct ActivationTrace {
  Tensor input;
  std::vector<Tensor> outputs;  // one per layer
  std::vector<double> scores;   // copy of the final output
};

struct LayerParams {
  Tensor weight;  // conv: (out_ch, in_ch, k, k); fc: (out, in)
  Tensor bias;    // conv: (out_ch); fc: (out)
  bool has_params() const { return !weight.empty(); }
};

namespace detail {

inline std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride) {
  return (in - kernel) / stride + 1;  // valid convolution, no padding
}

inline Shape layer_output_shape(const LayerSpec& spec, const Shape& in, std::size_t idx) {
  const std::string where = "layer " + std::to_string(idx);
  switch (spec.kind) {
    case LayerKind::Conv: {
      if (in.size() != 3) throw ShapeMismatch(where + ": conv expects (C,H,W) input, got " + shape_str(in));
      if (in[0] != spec.in_channels) {
        throw ShapeMismatch(where + ": conv expects " + std::to_string(spec.in_channels) +
                            " input channels, got " + std::to_string(in[0]));
      }
      if (spec.kernel == 0 || spec.stride == 0) throw ValidationError(where + ": conv kernel/stride must be positive");
      if (in[1] < spec.kernel || in[2] < spec.kernel) {
        throw ShapeMismatch(where + ": conv kernel " + std::to_string(spec.kernel) +
                            " larger than input " + shape_str(in));
      }
      return {spec.out_channels, conv_extent(in[1], spec.kernel, spec.stride),
              conv_extent(in[2], spec.kernel, spec.stride)};
    }
    case LayerKind::ReLU:
      return in;
    case LayerKind::Flatten:
      return {shape_product(in)};
    case LayerKind::FullyConnected: {
      if (in.size() != 1 || in[0] != spec.in) {
        throw ShapeMismatch(where + ": fc expects flat input of " + std::to_string(spec.in) +
                            ", got " + shape_str(in));
      }
      return {spec.out};
    }
  }
  throw ValidationError(where + ": unknown layer kind");
}

}  // namespace detail

class Network {
 public:
  explicit Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.input_shape.size() != 3) {
      throw ShapeMismatch("network: input shape must be (C,H,W), got " + shape_str(cfg_.input_shape));
    }
    if (cfg_.layers.empty()) throw ValidationError("network: no layers");
    if (cfg_.attribute_count == 0) throw ValidationError("network: attribute_count must be positive");

    Shape cur = cfg_.input_shape;
    for (std::size_t k = 0; k < cfg_.layers.size(); ++k) {
      cur = detail::layer_output_shape(cfg_.layers[k], cur, k);
      output_shapes_.push_back(cur);
    }
    if (cur.size() != 1 || cur[0] != cfg_.attribute_count) {
      throw ShapeMismatch("network: final output " + shape_str(cur) + " must be (" +
                          std::to_string(cfg_.attribute_count) + ")");
    }

    if (!cfg_.probe_layer) {
      for (std::size_t k = 0; k < cfg_.layers.size(); ++k) {
        if (cfg_.layers[k].kind == LayerKind::Conv) {
          cfg_.probe_layer = k;
          break;
        }
      }
    }
    if (!cfg_.probe_layer || *cfg_.probe_layer >= cfg_.layers.size() ||
        cfg_.layers[*cfg_.probe_layer].kind != LayerKind::Conv) {
      throw ValidationError("network: probe_layer must index a conv layer");
    }

    params_.resize(cfg_.layers.size());
    for (std::size_t k = 0; k < cfg_.layers.size(); ++k) {
      const LayerSpec& s = cfg_.layers[k];
      if (s.kind == LayerKind::Conv) {
        params_[k].weight = Tensor({s.out_channels, s.in_channels, s.kernel, s.kernel});
        params_[k].bias = Tensor({s.out_channels});
      } else if (s.kind == LayerKind::FullyConnected) {
        params_[k].weight = Tensor({s.out, s.in});
        params_[k].bias = Tensor({s.out});
      }
    }
  }

  // Weights uniform(-s*scale, s*scale), s = 1/sqrt(fan_in); biases zero.
  static Network randomized(NetworkConfig cfg, std::uint64_t seed, double init_scale = 1.0) {
    Network net(std::move(cfg));
    Rng rng = Rng::substream(seed, "init");
    for (std::size_t k = 0; k < net.cfg_.layers.size(); ++k) {
      LayerParams& p = net.params_[k];
      if (!p.has_params()) continue;
      const LayerSpec& s = net.cfg_.layers[k];
      const std::size_t fan_in = (s.kind == LayerKind::Conv)
                                     ? s.in_channels * s.kernel * s.kernel
                                     : s.in;
      const double bound = init_scale / std::sqrt(static_cast<double>(fan_in));
      for (double& w : p.weight.values()) w = rng.uniform(-bound, bound);
    }
    return net;
  }

  const NetworkConfig& config() const { return cfg_; }
  std::size_t attribute_count() const { return cfg_.attribute_count; }
  std::size_t probe_layer() const { return *cfg_.probe_layer; }
  const Shape& probe_shape() const { return output_shapes_[probe_layer()]; }
  std::size_t layer_count() const { return cfg_.layers.size(); }
  const std::vector<Shape>& output_shapes() const { return output_shapes_; }
  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }

  ActivationTrace forward(const Tensor& image) const {
    if (image.shape() != cfg_.input_shape) {
      throw ShapeMismatch("forward: image " + shape_str(image.shape()) +
                          " does not match input " + shape_str(cfg_.input_shape));
    }
    ActivationTrace tr;
    tr.input = image;
    tr.outputs.reserve(cfg_.layers.size());
    const Tensor* cur = &image;
    for (std::size_t k = 0; k < cfg_.layers.size(); ++k) {
      tr.outputs.push_back(apply_layer(k, *cur));
      cur = &tr.outputs.back();
    }
    const auto v = cur->values();
    tr.scores.assign(v.begin(), v.end());
    return tr;
  }

  // Resume the forward pass with a replacement output for `layer_index`.
  // Used by finite-difference oracles and the piecewise-linearity checks.
  std::vector<double> forward_from(std::size_t layer_index, const Tensor& x) const {
    if (x.shape() != output_shapes_[layer_index]) {
      throw ShapeMismatch("forward_from: " + shape_str(x.shape()) + " vs layer output " +
                          shape_str(output_shapes_[layer_index]));
    }
    Tensor cur = x;
    for (std::size_t k = layer_index + 1; k < cfg_.layers.size(); ++k) {
      cur = apply_layer(k, cur);
    }
    const auto v = cur.values();
    return std::vector<double>(v.begin(), v.end());
  }

  const Tensor& probe_output(const ActivationTrace& tr) const {
    return tr.outputs[probe_layer()];
  }

  // Gradient of the scalar score Y_i with respect to the probe-layer output,
  // back-propagated through the layers above the probe. ReLU gates use the
  // activation signs stored in the trace.
  Tensor grad_at_probe(const ActivationTrace& tr, std::size_t attr_index) const {
    if (attr_index >= cfg_.attribute_count) {
      throw ValidationError("grad_at_probe: attribute index " + std::to_string(attr_index) +
                            " out of range");
    }
    if (tr.outputs.size() != cfg_.layers.size()) {
      throw ShapeMismatch("grad_at_probe: trace does not match this network");
    }
    Tensor g({cfg_.attribute_count});
    g[attr_index] = 1.0;
    for (std::size_t k = cfg_.layers.size(); k-- > probe_layer() + 1;) {
      g = backward_input(k, layer_input(tr, k), tr.outputs[k], g, nullptr);
    }
    return g;
  }

  int predict_sign(const Tensor& image, std::size_t attr_index) const {
    const ActivationTrace tr = forward(image);
    return tr.scores[attr_index] >= 0.0 ? +1 : -1;  // tie at 0 resolves to +1
  }

  const Tensor& layer_input(const ActivationTrace& tr, std::size_t k) const {
    return k == 0 ? tr.input : tr.outputs[k - 1];
  }

  Tensor apply_layer(std::size_t k, const Tensor& in) const {
    const LayerSpec& s = cfg_.layers[k];
    switch (s.kind) {
      case LayerKind::Conv:
        return conv_forward(s, params_[k], in);
      case LayerKind::ReLU: {
        Tensor out = in;
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return out;
      }
      case LayerKind::Flatten:
        return in.reshaped({in.size()});
      case LayerKind::FullyConnected:
        return fc_forward(params_[k], in);
    }
    throw ValidationError("apply_layer: unknown kind");
  }

  // Gradient w.r.t. the layer input; optionally accumulates parameter
  // gradients into `grad_accum` (same shapes as the layer's params).
  Tensor backward_input(std::size_t k, const Tensor& in, const Tensor& out,
                        const Tensor& grad_out, LayerParams* grad_accum) const {
    const LayerSpec& s = cfg_.layers[k];
    switch (s.kind) {
      case LayerKind::Conv:
        return conv_backward(s, params_[k], in, grad_out, grad_accum);
      case LayerKind::ReLU: {
        Tensor g = grad_out;
        const auto vo = out.values();
        auto vg = g.values();
        for (std::size_t i = 0; i < vg.size(); ++i) {
          if (!(vo[i] > 0.0)) vg[i] = 0.0;
        }
        return g;
      }
      case LayerKind::Flatten:
        return grad_out.reshaped(in.shape());
      case LayerKind::FullyConnected:
        return fc_backward(params_[k], in, grad_out, grad_accum);
    }
    throw ValidationError("backward_input: unknown kind");
  }

 private:
  static Tensor conv_forward(const LayerSpec& s, const LayerParams& p, const Tensor& in) {
    const std::size_t H = in.shape()[1], W = in.shape()[2];
    const std::size_t oh = detail::conv_extent(H, s.kernel, s.stride);
    const std::size_t ow = detail::conv_extent(W, s.kernel, s.stride);
    Tensor out({s.out_channels, oh, ow});
    const auto wv = p.weight.values();
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      const double b = p.bias[co];
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = b;
          for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            for (std::size_t u = 0; u < s.kernel; ++u) {
              const double* inrow = &in.values()[(ci * H + oy * s.stride + u) * W + ox * s.stride];
              const double* wrow = &wv[((co * s.in_channels + ci) * s.kernel + u) * s.kernel];
              for (std::size_t v = 0; v < s.kernel; ++v) acc += wrow[v] * inrow[v];
            }
          }
          out.at(co, oy, ox) = acc;
        }
      }
    }
    return out;
  }

  static Tensor conv_backward(const LayerSpec& s, const LayerParams& p, const Tensor& in,
                              const Tensor& grad_out, LayerParams* grad_accum) {
    const std::size_t H = in.shape()[1], W = in.shape()[2];
    const std::size_t oh = grad_out.shape()[1], ow = grad_out.shape()[2];
    Tensor gin(in.shape());
    const auto wv = p.weight.values();
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double g = grad_out.at(co, oy, ox);
          if (grad_accum) grad_accum->bias[co] += g;
          for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
            for (std::size_t u = 0; u < s.kernel; ++u) {
              double* ginrow = &gin.values()[(ci * H + oy * s.stride + u) * W + ox * s.stride];
              const double* inrow = &in.values()[(ci * H + oy * s.stride + u) * W + ox * s.stride];
              const double* wrow = &wv[((co * s.in_channels + ci) * s.kernel + u) * s.kernel];
              double* gwrow = grad_accum
                                  ? &grad_accum->weight.values()[((co * s.in_channels + ci) * s.kernel + u) * s.kernel]
                                  : nullptr;
              for (std::size_t v = 0; v < s.kernel; ++v) {
                ginrow[v] += wrow[v] * g;
                if (gwrow) gwrow[v] += inrow[v] * g;
              }
            }
          }
        }
      }
    }
    return gin;
  }

  static Tensor fc_forward(const LayerParams& p, const Tensor& in) {
    const std::size_t rows = p.weight.shape()[0], cols = p.weight.shape()[1];
    Tensor out({rows});
    const auto wv = p.weight.values();
    const auto iv = in.values();
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = p.bias[r];
      const double* wrow = &wv[r * cols];
      for (std::size_t c = 0; c < cols; ++c) acc += wrow[c] * iv[c];
      out[r] = acc;
    }
    return out;
  }

  static Tensor fc_backward(const LayerParams& p, const Tensor& in, const Tensor& grad_out,
                            LayerParams* grad_accum) {
    const std::size_t rows = p.weight.shape()[0], cols = p.weight.shape()[1];
    Tensor gin(in.shape());
    const auto wv = p.weight.values();
    const auto iv = in.values();
    auto gv = gin.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const double g = grad_out[r];
      if (grad_accum) {
        grad_accum->bias[r] += g;
        double* gwrow = &grad_accum->weight.values()[r * cols];
        for (std::size_t c = 0; c < cols; ++c) gwrow[c] += iv[c] * g;
      }
      const double* wrow = &wv[r * cols];
      for (std::size_t c = 0; c < cols; ++c) gv[c] += wrow[c] * g;
    }
    return gin;
  }

  NetworkConfig cfg_;
  std::vector<LayerParams> params_;
  std::vector<Shape> output_shapes_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class LossKind { Logistic, SquaredError };

// One loss kind per attribute index. Logistic expects targets in {-1,+1},
// squared error accepts any finite target.
struct LossSpec {
  std::vector<LossKind> kinds;

  static LossSpec uniform(LossKind kind, std::size_t n) {
    LossSpec s;
    s.kinds.assign(n, kind);
    return s;
  }
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double init_scale = 1.0;  // multiplier on 1/sqrt(fan_in); used by callers creating the net
};

namespace detail {

inline double loss_value(LossKind kind, double y, double target) {
  if (kind == LossKind::Logistic) {
    // log(1 + exp(-y*t)), stable form
    const double m = -y * target;
    return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
  }
  const double d = target - y;
  return d * d;
}

inline double loss_grad(LossKind kind, double y, double target) {
  if (kind == LossKind::Logistic) {
    return -target / (1.0 + std::exp(y * target));
  }
  return 2.0 * (y - target);
}

}  // namespace detail

struct TrainResult {
  Network net;
  std::vector<double> epoch_loss;  // mean per-sample loss per epoch (pre-update order)
};

// Minibatch SGD. Per-sample loss is the mean over attributes; every random
// draw (the per-epoch shuffle) comes from the seed, so identical inputs give
// bit-identical weights. Zero epochs returns the net unchanged.
inline TrainResult train(Network net, const std::vector<Tensor>& images,
                         const std::vector<std::vector<double>>& targets,
                         const LossSpec& loss, const TrainConfig& cfg) {
  const std::size_t n = net.attribute_count();
  if (images.size() != targets.size()) {
    throw ShapeMismatch("train: " + std::to_string(images.size()) + " images vs " +
                        std::to_string(targets.size()) + " annotation rows");
  }
  if (images.empty()) throw EmptyInput("train: no samples");
  if (loss.kinds.size() != n) throw ShapeMismatch("train: loss spec must cover every attribute");
  for (const auto& row : targets) {
    if (row.size() != n) throw ShapeMismatch("train: annotation row width != attribute count");
  }
  if (cfg.learning_rate <= 0 || cfg.batch_size == 0) {
    throw ValidationError("train: learning rate and batch size must be positive");
  }

  Rng rng = Rng::substream(cfg.seed, "shuffle");
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<LayerParams> grads(net.layer_count());
  for (std::size_t k = 0; k < net.layer_count(); ++k) {
    if (net.params()[k].has_params()) {
      grads[k].weight = Tensor(net.params()[k].weight.shape());
      grads[k].bias = Tensor(net.params()[k].bias.shape());
    }
  }

  TrainResult result{std::move(net), {}};
  Network& model = result.net;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    KahanSum epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double batch = static_cast<double>(end - start);
      for (auto& g : grads) {
        if (g.has_params()) {
          for (double& v : g.weight.values()) v = 0.0;
          for (double& v : g.bias.values()) v = 0.0;
        }
      }
      double batch_loss = 0.0;
      for (std::size_t pos = start; pos < end; ++pos) {
        const std::size_t idx = order[pos];
        const ActivationTrace tr = model.forward(images[idx]);
        Tensor g({n});
        double sample_loss = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
          sample_loss += detail::loss_value(loss.kinds[a], tr.scores[a], targets[idx][a]);
          g[a] = detail::loss_grad(loss.kinds[a], tr.scores[a], targets[idx][a]) /
                 static_cast<double>(n);
        }
        sample_loss /= static_cast<double>(n);
        batch_loss += sample_loss;
        epoch_loss.add(sample_loss);
        for (std::size_t k = model.layer_count(); k-- > 0;) {
          LayerParams* accum = grads[k].has_params() ? &grads[k] : nullptr;
          if (k == 0 && accum == nullptr) break;
          Tensor gin = model.backward_input(k, model.layer_input(tr, k), tr.outputs[k], g, accum);
          if (k == 0) break;  // input gradient not needed
          g = std::move(gin);
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NonFiniteLoss("train: non-finite loss in epoch " + std::to_string(epoch));
      }
      const double step = cfg.learning_rate / batch;
      for (std::size_t k = 0; k < model.layer_count(); ++k) {
        if (!grads[k].has_params()) continue;
        auto w = model.params()[k].weight.values();
        auto gw = grads[k].weight.values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
        auto b = model.params()[k].bias.values();
        auto gb = grads[k].bias.values();
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * gb[i];
      }
    }
    result.epoch_loss.push_back(epoch_loss.value() / static_cast<double>(order.size()));
    if (!std::isfinite(result.epoch_loss.back())) {
      throw NonFiniteLoss("train: non-finite epoch loss in epoch " + std::to_string(epoch));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model file: u32 LE header length, JSON header (layer specs, tensor names
// and offsets), then the named BLTN records. Offsets are relative to the
// first byte after the header.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json layer_to_json(const LayerSpec& s) {
  nlohmann::ordered_json j;
  switch (s.kind) {
    case LayerKind::Conv:
      j["kind"] = "conv";
      j["kernel"] = s.kernel;
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["stride"] = s.stride;
      break;
    case LayerKind::ReLU:
      j["kind"] = "relu";
      break;
    case LayerKind::Flatten:
      j["kind"] = "flatten";
      break;
    case LayerKind::FullyConnected:
      j["kind"] = "fc";
      j["in"] = s.in;
      j["out"] = s.out;
      break;
  }
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv") {
    return LayerSpec::conv(j.at("kernel").get<std::size_t>(), j.at("in_channels").get<std::size_t>(),
                           j.at("out_channels").get<std::size_t>(), j.at("stride").get<std::size_t>());
  }
  if (kind == "relu") return LayerSpec::relu();
  if (kind == "flatten") return LayerSpec::flatten();
  if (kind == "fc") return LayerSpec::fc(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>());
  throw FormatError("model: unknown layer kind '" + kind + "'");
}

}  // namespace detail

inline void save_model(const std::filesystem::path& path, const Network& net) {
  // Serialize records first so offsets are exact.
  std::vector<std::pair<std::string, std::string>> records;  // name -> bytes
  for (std::size_t k = 0; k < net.layer_count(); ++k) {
    const LayerParams& p = net.params()[k];
    if (!p.has_params()) continue;
    for (const auto& [suffix, tensor] :
         {std::pair<const char*, const Tensor*>{"weight", &p.weight},
          std::pair<const char*, const Tensor*>{"bias", &p.bias}}) {
      std::ostringstream os(std::ios::binary);
      write_bltn(os, *tensor);
      records.emplace_back("layer" + std::to_string(k) + "." + suffix, os.str());
    }
  }

  nlohmann::ordered_json header;
  header["format"] = "micronet";
  header["version"] = 1;
  header["input_shape"] = net.config().input_shape;
  header["attribute_count"] = net.attribute_count();
  header["probe_layer"] = net.probe_layer();
  header["layers"] = nlohmann::ordered_json::array();
  for (const LayerSpec& s : net.config().layers) header["layers"].push_back(detail::layer_to_json(s));
  header["tensors"] = nlohmann::ordered_json::array();
  std::size_t off = 0;
  for (const auto& [name, bytes] : records) {
    header["tensors"].push_back({{"name", name}, {"offset", off}});
    off += bytes.size();
  }
  const std::string header_text = header.dump();

  atomic_write(path, [&](std::ostream& os) {
    detail::put_u32(os, static_cast<std::uint32_t>(header_text.size()));
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, bytes] : records) {
      os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
  }, std::ios::binary);
}

inline Network load_model(const std::filesystem::path& path) {
  auto is = open_input(path, std::ios::binary);
  const std::uint32_t header_len = detail::get_u32(is);
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), header_len);
  if (!is) throw FormatError("model: truncated header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model: bad header JSON in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != "micronet") throw FormatError("model: not a micronet file");

  NetworkConfig cfg;
  cfg.input_shape = header.at("input_shape").get<Shape>();
  cfg.attribute_count = header.at("attribute_count").get<std::size_t>();
  cfg.probe_layer = header.at("probe_layer").get<std::size_t>();
  for (const auto& lj : header.at("layers")) cfg.layers.push_back(detail::layer_from_json(lj));
  Network net(std::move(cfg));

  const std::streampos payload_base = is.tellg();
  for (const auto& tj : header.at("tensors")) {
    const std::string name = tj.at("name").get<std::string>();
    const std::size_t offset = tj.at("offset").get<std::size_t>();
    is.seekg(payload_base + static_cast<std::streamoff>(offset));
    Tensor t = read_bltn(is);
    const auto dotpos = name.find('.');
    if (dotpos == std::string::npos || name.substr(0, 5) != "layer") {
      throw FormatError("model: bad tensor name '" + name + "'");
    }
    const std::size_t k = static_cast<std::size_t>(std::stoul(name.substr(5, dotpos - 5)));
    if (k >= net.layer_count() || !net.params()[k].has_params()) {
      throw FormatError("model: tensor '" + name + "' refers to a parameterless layer");
    }
    const std::string suffix = name.substr(dotpos + 1);
    Tensor& dst = suffix == "weight" ? net.params()[k].weight
                : suffix == "bias"   ? net.params()[k].bias
                                     : throw FormatError("model: bad tensor suffix '" + suffix + "'");
    if (dst.shape() != t.shape()) {
      throw FormatError("model: tensor '" + name + "' shape " + shape_str(t.shape()) +
                        " does not match layer spec " + shape_str(dst.shape()));
    }
    if (!t.all_finite()) throw FormatError("model: non-finite values in '" + name + "'");
    dst = std::move(t);
  }
  return net;
}

// Default experiment architecture:
// Conv3x3(->8) ReLU Conv3x3(->16) ReLU Flatten FC(->32) ReLU FC(->n).
inline NetworkConfig default_network_config(std::size_t attrs, std::size_t channels,
                                            std::size_t height, std::size_t width) {
  NetworkConfig cfg;
  cfg.input_shape = {channels, height, width};
  const std::size_t h1 = detail::conv_extent(height, 3, 1);
  const std::size_t w1 = detail::conv_extent(width, 3, 1);
  const std::size_t h2 = detail::conv_extent(h1, 3, 1);
  const std::size_t w2 = detail::conv_extent(w1, 3, 1);
  cfg.layers = {
      LayerSpec::conv(3, channels, 8),
      LayerSpec::relu(),
      LayerSpec::conv(3, 8, 16),
      LayerSpec::relu(),
      LayerSpec::flatten(),
      LayerSpec::fc(16 * h2 * w2, 32),
      LayerSpec::relu(),
      LayerSpec::fc(32, attrs),
  };
  cfg.attribute_count = attrs;
  return cfg;
}

}  // namespace biasdiag
