#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "support/oracles.hpp"
#include "wpcn/nn.hpp"

using namespace wpcn;
using namespace wpcn::nn;
using wpcn::testing::check_net_gradient;

namespace {

Vector random_vector(Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = u(rng);
  return v;
}

DenseNet toy_net(Rng& rng, Activation last = Activation::linear) {
  DenseNet net({3, 5, 4, 2}, {Activation::tanh, Activation::tanh, last}, rng);
  for (std::size_t l = 0; l < 3; ++l) net.layer(l).bias = random_vector(net.layers()[l].bias.size(), rng) * 0.3;
  return net;
}

// Straight-line forward pass with explicit loops.
Vector loop_forward(const DenseNet& net, const Vector& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (const Layer& layer : net.layers()) {
    std::vector<double> z(static_cast<std::size_t>(layer.weight.rows()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      double s = layer.bias(r);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) s += layer.weight(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = s;
    }
    if (layer.activation == Activation::tanh) {
      for (double& v : z) v = std::tanh(v);
    } else if (layer.activation == Activation::softmax) {
      double m = -1e300, total = 0.0;
      for (double v : z) m = std::max(m, v);
      for (double& v : z) total += (v = std::exp(v - m));
      for (double& v : z) v /= total;
    }
    a = z;
  }
  return Eigen::Map<Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
}

}  // namespace

TEST_CASE("zero net outputs zero, zero softmax is uniform") {
  const DenseNet zero = DenseNet::zeros({3, 4, 1}, {Activation::tanh, Activation::linear});
  CHECK(zero.predict(Vector::Constant(3, 7.0))(0) == 0.0);
  const DenseNet head = DenseNet::zeros({3, 4}, {Activation::softmax});
  const Vector p = head.predict(Vector::Ones(3));
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(p(k) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("forward matches a loop oracle") {
  Rng rng(1);
  for (Activation last : {Activation::linear, Activation::softmax, Activation::tanh}) {
    const DenseNet net = toy_net(rng, last);
    for (int t = 0; t < 10; ++t) {
      const Vector x = random_vector(3, rng);
      const Vector want = loop_forward(net, x);
      const Vector got = net.predict(x);
      for (Eigen::Index k = 0; k < got.size(); ++k) CHECK(std::fabs(got(k) - want(k)) <= 1e-12);
    }
  }
}

TEST_CASE("topology validation") {
  Rng rng(2);
  CHECK_THROWS_AS(DenseNet({3, 4, 2}, {Activation::softmax, Activation::linear}, rng), std::invalid_argument);
  CHECK_THROWS_AS(DenseNet({3, 4}, {Activation::tanh, Activation::linear}, rng), std::invalid_argument);
  const DenseNet net({3, 4, 2}, {Activation::tanh, Activation::linear}, rng);
  CHECK(net.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
  const double bound = 1.0 / std::sqrt(3.0);
  CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= bound);
  CHECK(net.layers()[0].bias.isZero());
}

TEST_CASE("linear layer squared-loss gradient") {
  Rng rng(3);
  DenseNet net({3, 1}, {Activation::linear}, rng);
  const Vector x = random_vector(3, rng);
  const double y = 0.7;
  const auto cache = net.forward(x);
  const double yhat = cache.output()(0);
  const Gradients g = net.backward(cache, Vector::Constant(1, 2.0 * (yhat - y)));
  for (Eigen::Index c = 0; c < 3; ++c) CHECK(g.layers[0].weight(0, c) == doctest::Approx(2.0 * (yhat - y) * x(c)));
  CHECK(g.layers[0].bias(0) == doctest::Approx(2.0 * (yhat - y)));
}

TEST_CASE("backward matches finite differences") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    DenseNet net = toy_net(rng, trial % 2 ? Activation::tanh : Activation::linear);
    const Vector x = random_vector(3, rng);
    const Vector w = random_vector(2, rng);
    const Gradients g = net.backward(net.forward(x), w);
    const auto check = check_net_gradient(net, [&] { return w.dot(net.predict(x)); }, g, 1e-5);
    CHECK(check.max_rel_error <= 1e-4);
    CHECK(check.checked == net.parameter_count());
  }
}

TEST_CASE("input gradient chains nets") {
  Rng rng(5);
  DenseNet net = toy_net(rng);
  const Vector x = random_vector(3, rng);
  const Gradients g = net.backward(net.forward(x), Vector::Ones(2));
  for (Eigen::Index k = 0; k < 3; ++k) {
    Vector up = x, down = x;
    up(k) += 1e-6;
    down(k) -= 1e-6;
    const double fd = (net.predict(up).sum() - net.predict(down).sum()) / 2e-6;
    CHECK(g.input(k) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("softmax cross-entropy gradient is probs minus onehot") {
  Rng rng(6);
  DenseNet net({3, 4}, {Activation::softmax}, rng);
  const Vector x = random_vector(3, rng);
  const auto cache = net.forward(x);
  const Vector p = cache.output();
  const Vector seed = -log_prob_grad_seed(p, 2);
  Vector expected = p;
  expected(2) -= 1.0;
  CHECK((seed - expected).cwiseAbs().maxCoeff() < 1e-15);
  const Gradients g = net.backward(cache, seed, Seed::logits);
  CHECK((g.layers[0].bias - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("log-probability seed") {
  const Vector uniform = Vector::Constant(4, 0.25);
  const Vector s = log_prob_grad_seed(uniform, 0);
  CHECK(s(0) == doctest::Approx(0.75));
  for (Eigen::Index k = 1; k < 4; ++k) CHECK(s(k) == doctest::Approx(-0.25));
  Vector onehot = Vector::Zero(4);
  onehot(0) = 1.0;
  CHECK(log_prob_grad_seed(onehot, 0).isZero());
  CHECK_THROWS_AS(log_prob_grad_seed(uniform, 4), std::invalid_argument);

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector z = random_vector(5, rng) * 3.0;
    const std::size_t k = static_cast<std::size_t>(trial % 5);
    const Vector seed = log_prob_grad_seed(softmax(z), k);
    for (Eigen::Index m = 0; m < 5; ++m) {
      Vector up = z, down = z;
      up(m) += 1e-6;
      down(m) -= 1e-6;
      const double fd = (log_softmax_at(up, k) - log_softmax_at(down, k)) / 2e-6;
      CHECK(std::fabs(seed(m) - fd) < 1e-6);
    }
  }
}

TEST_CASE("softmax is stable for large logits") {
  Vector z(3);
  z << 1000.0, 1001.0, 999.0;
  const Vector p = softmax(z);
  CHECK(p.allFinite());
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(std::isfinite(log_softmax_at(z, 2)));
}

TEST_CASE("sgd steps") {
  DenseNet net = DenseNet::zeros({1, 1}, {Activation::linear});
  net.layer(0).weight(0, 0) = 1.0;
  Gradients g = net.zero_gradients();
  g.layers[0].weight(0, 0) = 2.0;
  const DenseNet before = net;
  net.sgd_step(g, 0.0, Direction::descent);
  CHECK(net == before);
  net.sgd_step(g, 0.1, Direction::descent);
  CHECK(net.layers()[0].weight(0, 0) == doctest::Approx(0.8).epsilon(1e-15));

  Rng rng(8);
  DenseNet big = toy_net(rng);
  const DenseNet copy = big;
  Gradients r = big.backward(big.forward(random_vector(3, rng)), Vector::Ones(2));
  big.sgd_step(r, 0.5, Direction::ascent);
  CHECK_FALSE(big == copy);
  big.sgd_step(r, 0.5, Direction::descent);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK((big.layers()[l].weight - copy.layers()[l].weight).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("non-finite gradients are rejected") {
  Rng rng(9);
  DenseNet net = toy_net(rng);
  const DenseNet copy = net;
  Gradients g = net.zero_gradients();
  g.layers[1].bias(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(g.all_finite());
  CHECK_THROWS_AS(net.sgd_step(g, 0.1, Direction::ascent), NumericError);
  CHECK(net == copy);
}

TEST_CASE("stale caches are rejected") {
  Rng rng(10);
  DenseNet net = toy_net(rng);
  DenseNet other = toy_net(rng);
  const auto cache = net.forward(Vector::Ones(3));
  CHECK_THROWS_AS(other.backward(cache, Vector::Ones(2)), StateError);
  net.sgd_step(net.backward(cache, Vector::Ones(2)), 0.1, Direction::ascent);
  CHECK_THROWS_AS(net.backward(cache, Vector::Ones(2)), StateError);
}

TEST_CASE("save and load round trip") {
  Rng rng(11);
  const DenseNet net = toy_net(rng, Activation::softmax);
  std::stringstream ss;
  net.save(ss);
  const DenseNet back = DenseNet::load(ss);
  CHECK(back == net);
  CHECK(back.predict(Vector::Ones(3)) == net.predict(Vector::Ones(3)));

  std::stringstream bad("garbage");
  CHECK_THROWS_AS(DenseNet::load(bad), ConfigError);
  std::string bytes;
  {
    std::stringstream full;
    net.save(full);
    bytes = full.str();
  }
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(DenseNet::load(truncated), ConfigError);
}

TEST_CASE("two-head actor") {
  Rng rng(12);
  TwoHeadActorNet actor = TwoHeadActorNet::create(4, {6}, {5}, 3, 7, rng);
  const Vector s = random_vector(4, rng);
  const ActorForward fwd = actor.forward(s);
  CHECK(fwd.time_probs().size() == 3);
  CHECK(fwd.power_probs().size() == 7);
  CHECK(fwd.time_probs().sum() == doctest::Approx(1.0));
  CHECK(actor.log_prob(fwd, 1, 4) ==
        doctest::Approx(std::log(fwd.time_probs()(1)) + std::log(fwd.power_probs()(4))).epsilon(1e-12));

  const ActorGradients g = actor.log_prob_gradient(fwd, 1, 4);
  auto logp = [&] { return actor.log_prob(actor.forward(s), 1, 4); };
  CHECK(check_net_gradient(actor.trunk(), logp, g.trunk).max_rel_error <= 1e-4);
  CHECK(check_net_gradient(actor.time_head(), logp, g.time).max_rel_error <= 1e-4);
  CHECK(check_net_gradient(actor.power_head(), logp, g.power).max_rel_error <= 1e-4);

  std::stringstream ss;
  actor.save(ss);
  const TwoHeadActorNet back = TwoHeadActorNet::load(ss);
  CHECK(back.forward(s).power_probs() == actor.forward(s).power_probs());
}
