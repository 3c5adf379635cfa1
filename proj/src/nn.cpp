#include "wpcn/nn.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace wpcn::nn {

namespace {

std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void apply_activation(Activation act, Vector& z) {
  switch (act) {
    case Activation::tanh:
      z = z.array().tanh();
      break;
    case Activation::linear:
      break;
    case Activation::softmax:
      z = softmax(z);
      break;
  }
}

// dL/dz from dL/dy for y = act(z).
Vector activation_backward(Activation act, const Vector& y, const Vector& grad) {
  switch (act) {
    case Activation::tanh:
      return grad.array() * (1.0 - y.array().square());
    case Activation::linear:
      return grad;
    case Activation::softmax:
      return y.array() * (grad.array() - y.dot(grad));
  }
  return grad;
}

// Little-endian scalar I/O.
template <typename T>
void write_le(std::ostream& out, T value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  out.write(bytes, 8);
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ConfigError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

constexpr std::uint64_t kMaxLayers = 64;
constexpr std::uint64_t kMaxWidth = 1u << 20;

}  // namespace

Gradients& Gradients::operator*=(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  input *= s;
  return *this;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.layers.size() != layers.size()) throw std::invalid_argument("gradient shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
  }
  if (input.size() == other.input.size()) input += other.input;
  return *this;
}

bool Gradients::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

double log_softmax_at(const Vector& logits, std::size_t k) {
  if (k >= static_cast<std::size_t>(logits.size())) throw std::invalid_argument("log_softmax_at: index out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits(static_cast<Eigen::Index>(k)) - lse;
}

Vector log_prob_grad_seed(const Vector& probs, std::size_t chosen) {
  if (chosen >= static_cast<std::size_t>(probs.size())) {
    throw std::invalid_argument("log_prob_grad_seed: chosen index " + std::to_string(chosen) +
                                " out of range for " + std::to_string(probs.size()) + " actions");
  }
  Vector g = -probs;
  g(static_cast<Eigen::Index>(chosen)) += 1.0;
  return g;
}

DenseNet::DenseNet(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations, Rng& rng)
    : DenseNet(zeros(widths, activations)) {
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
  }
}

DenseNet DenseNet::zeros(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations) {
  if (widths.size() != activations.size() + 1 || activations.empty()) {
    throw std::invalid_argument("DenseNet: need one activation per layer and at least one layer");
  }
  DenseNet net;
  net.id_ = next_net_id();
  for (std::size_t l = 0; l < activations.size(); ++l) {
    if (widths[l] == 0 || widths[l + 1] == 0) throw std::invalid_argument("DenseNet: zero-width layer");
    net.layers_.push_back({Matrix::Zero(static_cast<Eigen::Index>(widths[l + 1]), static_cast<Eigen::Index>(widths[l])),
                           Vector::Zero(static_cast<Eigen::Index>(widths[l + 1])), activations[l]});
  }
  net.validate();
  return net;
}

DenseNet::DenseNet(const DenseNet& other) : layers_(other.layers_), id_(next_net_id()), version_(0) {}

DenseNet& DenseNet::operator=(const DenseNet& other) {
  if (this != &other) {
    layers_ = other.layers_;
    id_ = next_net_id();
    version_ = 0;
  }
  return *this;
}

void DenseNet::validate() const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) throw std::invalid_argument("DenseNet: bias/weight mismatch");
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw std::invalid_argument("DenseNet: incompatible consecutive layers");
    }
    if (layer.activation == Activation::softmax && l + 1 != layers_.size()) {
      throw std::invalid_argument("DenseNet: softmax is only allowed on the output layer");
    }
  }
}

std::size_t DenseNet::input_width() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t DenseNet::output_width() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::vector<std::size_t> DenseNet::widths() const {
  std::vector<std::size_t> w;
  if (layers_.empty()) return w;
  w.push_back(input_width());
  for (const auto& l : layers_) w.push_back(static_cast<std::size_t>(l.weight.rows()));
  return w;
}

std::vector<Activation> DenseNet::activations() const {
  std::vector<Activation> a;
  for (const auto& l : layers_) a.push_back(l.activation);
  return a;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Layer& DenseNet::layer(std::size_t l) {
  ++version_;
  return layers_.at(l);
}

ForwardCache DenseNet::forward(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_width()) {
    throw std::invalid_argument("DenseNet::forward: input width " + std::to_string(x.size()) + ", expected " +
                                std::to_string(input_width()));
  }
  ForwardCache cache;
  cache.net_id = id_;
  cache.version = version_;
  cache.activations.reserve(layers_.size() + 1);
  cache.activations.push_back(x);
  for (const auto& layer : layers_) {
    Vector z = layer.weight * cache.activations.back() + layer.bias;
    if (&layer == &layers_.back()) cache.logits = z;
    apply_activation(layer.activation, z);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

Vector DenseNet::predict(const Vector& x) const { return forward(x).output(); }

Gradients DenseNet::backward(const ForwardCache& cache, const Vector& grad, Seed seed) const {
  if (cache.net_id != id_ || cache.version != version_ || cache.activations.size() != layers_.size() + 1) {
    throw StateError("DenseNet::backward: forward cache is stale or belongs to another net");
  }
  if (static_cast<std::size_t>(grad.size()) != output_width()) {
    throw std::invalid_argument("DenseNet::backward: gradient width mismatch");
  }
  Gradients out;
  out.layers.resize(layers_.size());
  Vector delta = seed == Seed::logits ? grad
                                      : activation_backward(layers_.back().activation, cache.output(), grad);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Vector& a_in = cache.activations[l];
    out.layers[l].weight = delta * a_in.transpose();
    out.layers[l].bias = delta;
    Vector upstream = layers_[l].weight.transpose() * delta;
    if (l > 0) {
      delta = activation_backward(layers_[l - 1].activation, a_in, upstream);
    } else {
      out.input = std::move(upstream);
    }
  }
  return out;
}

void DenseNet::sgd_step(const Gradients& grad, double lr, Direction direction) {
  if (grad.layers.size() != layers_.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (grad.layers[l].weight.rows() != layers_[l].weight.rows() ||
        grad.layers[l].weight.cols() != layers_[l].weight.cols() ||
        grad.layers[l].bias.size() != layers_[l].bias.size()) {
      throw std::invalid_argument("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!grad.all_finite()) throw NumericError("sgd_step: non-finite gradient rejected");
  const double s = direction == Direction::ascent ? lr : -lr;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weight += s * grad.layers[l].weight;
    layers_[l].bias += s * grad.layers[l].bias;
  }
  ++version_;
}

Gradients DenseNet::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  g.input = Vector::Zero(static_cast<Eigen::Index>(input_width()));
  return g;
}

void DenseNet::save(std::ostream& out) const {
  write_le<std::uint64_t>(out, layers_.size());
  for (std::size_t w : widths()) write_le<std::uint64_t>(out, w);
  for (Activation a : activations()) write_le<std::uint64_t>(out, static_cast<std::uint64_t>(a));
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) write_le<double>(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) write_le<double>(out, l.bias(r));
  }
  if (!out) throw ConfigError("checkpoint write failed");
}

DenseNet DenseNet::load(std::istream& in) {
  const auto count = read_le<std::uint64_t>(in);
  if (count == 0 || count > kMaxLayers) throw ConfigError("checkpoint: implausible layer count");
  std::vector<std::size_t> widths(count + 1);
  for (auto& w : widths) {
    const auto v = read_le<std::uint64_t>(in);
    if (v == 0 || v > kMaxWidth) throw ConfigError("checkpoint: implausible layer width");
    w = static_cast<std::size_t>(v);
  }
  std::vector<Activation> acts(count);
  for (auto& a : acts) {
    const auto code = read_le<std::uint64_t>(in);
    if (code > 2) throw ConfigError("checkpoint: unknown activation code");
    a = static_cast<Activation>(code);
  }
  DenseNet net;
  try {
    net = zeros(widths, acts);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  for (auto& l : net.layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = read_le<double>(in);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = read_le<double>(in);
  }
  return net;
}

bool DenseNet::operator==(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& a = layers_[l];
    const Layer& b = other.layers_[l];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

TwoHeadActorNet::TwoHeadActorNet(DenseNet trunk, DenseNet time_head, DenseNet power_head)
    : trunk_(std::move(trunk)), time_head_(std::move(time_head)), power_head_(std::move(power_head)) {
  if (time_head_.input_width() != trunk_.output_width() || power_head_.input_width() != trunk_.output_width()) {
    throw std::invalid_argument("TwoHeadActorNet: head input must match trunk output");
  }
  if (time_head_.activations().back() != Activation::softmax ||
      power_head_.activations().back() != Activation::softmax) {
    throw std::invalid_argument("TwoHeadActorNet: heads must end in softmax");
  }
}

TwoHeadActorNet TwoHeadActorNet::create(std::size_t input, const std::vector<std::size_t>& trunk_hidden,
                                        const std::vector<std::size_t>& head_hidden, std::size_t time_levels,
                                        std::size_t power_levels, Rng& rng) {
  if (trunk_hidden.empty()) throw std::invalid_argument("TwoHeadActorNet: trunk needs a hidden layer");
  std::vector<std::size_t> trunk_widths{input};
  trunk_widths.insert(trunk_widths.end(), trunk_hidden.begin(), trunk_hidden.end());
  DenseNet trunk(trunk_widths, std::vector<Activation>(trunk_hidden.size(), Activation::tanh), rng);

  auto head = [&](std::size_t levels) {
    std::vector<std::size_t> widths{trunk_hidden.back()};
    widths.insert(widths.end(), head_hidden.begin(), head_hidden.end());
    widths.push_back(levels);
    std::vector<Activation> acts(head_hidden.size(), Activation::tanh);
    acts.push_back(Activation::softmax);
    return DenseNet(widths, acts, rng);
  };
  DenseNet time = head(time_levels);
  DenseNet power = head(power_levels);
  return TwoHeadActorNet(std::move(trunk), std::move(time), std::move(power));
}

ActorForward TwoHeadActorNet::forward(const Vector& state) const {
  ActorForward f;
  f.trunk = trunk_.forward(state);
  f.time = time_head_.forward(f.trunk.output());
  f.power = power_head_.forward(f.trunk.output());
  return f;
}

double TwoHeadActorNet::log_prob(const ActorForward& fwd, std::size_t k_tau, std::size_t k_p) const {
  return log_softmax_at(fwd.time.logits, k_tau) + log_softmax_at(fwd.power.logits, k_p);
}

ActorGradients TwoHeadActorNet::log_prob_gradient(const ActorForward& fwd, std::size_t k_tau,
                                                  std::size_t k_p) const {
  ActorGradients g;
  g.time = time_head_.backward(fwd.time, log_prob_grad_seed(fwd.time_probs(), k_tau), Seed::logits);
  g.power = power_head_.backward(fwd.power, log_prob_grad_seed(fwd.power_probs(), k_p), Seed::logits);
  g.trunk = trunk_.backward(fwd.trunk, g.time.input + g.power.input);
  return g;
}

void TwoHeadActorNet::sgd_step(const ActorGradients& grad, double lr, Direction direction) {
  if (!grad.trunk.all_finite() || !grad.time.all_finite() || !grad.power.all_finite()) {
    throw NumericError("actor sgd_step: non-finite gradient rejected");
  }
  trunk_.sgd_step(grad.trunk, lr, direction);
  time_head_.sgd_step(grad.time, lr, direction);
  power_head_.sgd_step(grad.power, lr, direction);
}

void TwoHeadActorNet::save(std::ostream& out) const {
  trunk_.save(out);
  time_head_.save(out);
  power_head_.save(out);
}

TwoHeadActorNet TwoHeadActorNet::load(std::istream& in) {
  DenseNet trunk = DenseNet::load(in);
  DenseNet time = DenseNet::load(in);
  DenseNet power = DenseNet::load(in);
  try {
    return TwoHeadActorNet(std::move(trunk), std::move(time), std::move(power));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace wpcn::nn
