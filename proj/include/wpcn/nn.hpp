#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "wpcn/common.hpp"

namespace wpcn::nn {

enum class Activation : std::uint8_t { tanh = 0, linear = 1, softmax = 2 };

enum class Direction { ascent, descent };

/// Where the gradient handed to backward() lives: after the output
/// activation, or on the output layer's pre-activation (logits).
enum class Seed { output, logits };

struct Layer {
  Matrix weight;  ///< out x in
  Vector bias;
  Activation activation = Activation::tanh;
};

struct LayerGradient {
  Matrix weight;
  Vector bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  Vector input;  ///< dL/dx, used to chain nets

  Gradients& operator*=(double s);
  Gradients& operator+=(const Gradients& other);
  bool all_finite() const;
};

struct ForwardCache {
  std::vector<Vector> activations;  ///< [0] = input, [l + 1] = output of layer l
  Vector logits;                    ///< pre-activation of the last layer
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;

  const Vector& output() const { return activations.back(); }
};

/// Numerically stable softmax (max-subtracted).
Vector softmax(const Vector& logits);

/// log softmax(logits)[k] via log-sum-exp.
double log_softmax_at(const Vector& logits, std::size_t k);

/// d log p_k / d logits = onehot(k) - p.
Vector log_prob_grad_seed(const Vector& probs, std::size_t chosen);

/// Fully connected feedforward net with manual backprop.
class DenseNet {
 public:
  DenseNet() = default;

  /// widths has one more entry than activations. Weights uniform in
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  DenseNet(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations, Rng& rng);

  /// Same topology, every parameter zero.
  static DenseNet zeros(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations);

  DenseNet(const DenseNet& other);
  DenseNet& operator=(const DenseNet& other);
  DenseNet(DenseNet&&) noexcept = default;
  DenseNet& operator=(DenseNet&&) noexcept = default;

  std::size_t input_width() const;
  std::size_t output_width() const;
  std::vector<std::size_t> widths() const;
  std::vector<Activation> activations() const;
  std::size_t parameter_count() const;

  const std::vector<Layer>& layers() const { return layers_; }
  /// Mutable access; invalidates outstanding forward caches.
  Layer& layer(std::size_t l);

  ForwardCache forward(const Vector& x) const;
  Vector predict(const Vector& x) const;

  /// Gradients of a scalar loss given dL/d(output) (or dL/d(logits)).
  /// Throws StateError if the cache came from another net or an older
  /// parameter version.
  Gradients backward(const ForwardCache& cache, const Vector& grad, Seed seed = Seed::output) const;

  /// params <- params +/- lr * grad. Rejects non-finite gradients with
  /// NumericError, leaving the parameters untouched.
  void sgd_step(const Gradients& grad, double lr, Direction direction);

  /// Zero gradient with this net's shape.
  Gradients zero_gradients() const;

  /// Flat little-endian float64 stream preceded by a topology header.
  void save(std::ostream& out) const;
  static DenseNet load(std::istream& in);

  bool operator==(const DenseNet& other) const;

 private:
  void validate() const;

  std::vector<Layer> layers_;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

struct ActorForward {
  ForwardCache trunk;
  ForwardCache time;
  ForwardCache power;

  const Vector& time_probs() const { return time.output(); }
  const Vector& power_probs() const { return power.output(); }
};

struct ActorGradients {
  Gradients trunk;
  Gradients time;
  Gradients power;
};

/// Shared tanh trunk followed by two softmax branches (time, power). The
/// joint policy is the product of the two branch distributions.
class TwoHeadActorNet {
 public:
  TwoHeadActorNet() = default;
  TwoHeadActorNet(DenseNet trunk, DenseNet time_head, DenseNet power_head);

  /// trunk: input -> trunk_hidden (tanh); each head: head_hidden (tanh) -> K (softmax).
  static TwoHeadActorNet create(std::size_t input, const std::vector<std::size_t>& trunk_hidden,
                                const std::vector<std::size_t>& head_hidden, std::size_t time_levels,
                                std::size_t power_levels, Rng& rng);

  ActorForward forward(const Vector& state) const;

  /// log pi_time(k_tau | s) + log pi_power(k_p | s).
  double log_prob(const ActorForward& fwd, std::size_t k_tau, std::size_t k_p) const;

  /// Gradient of log_prob with respect to every actor parameter.
  ActorGradients log_prob_gradient(const ActorForward& fwd, std::size_t k_tau, std::size_t k_p) const;

  void sgd_step(const ActorGradients& grad, double lr, Direction direction);

  const DenseNet& trunk() const { return trunk_; }
  const DenseNet& time_head() const { return time_head_; }
  const DenseNet& power_head() const { return power_head_; }
  DenseNet& trunk() { return trunk_; }
  DenseNet& time_head() { return time_head_; }
  DenseNet& power_head() { return power_head_; }

  void save(std::ostream& out) const;
  static TwoHeadActorNet load(std::istream& in);

 private:
  DenseNet trunk_;
  DenseNet time_head_;
  DenseNet power_head_;
};

}  // namespace wpcn::nn
