#include "wpcn/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace wpcn::channel {

namespace {

constexpr double kSeriesCutoff = 12.0;

double j0_series(double x) {
  const double q = -0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int m = 1; m < 200; ++m) {
    term *= q / (static_cast<double>(m) * m);
    sum += term;
    if (std::abs(term) < 1e-18 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

// Hankel expansion: J0(x) = sqrt(2 / (pi x)) (P cos(chi) - Q sin(chi)).
double j0_asymptotic(double x) {
  double p = 1.0;
  double q = 0.0;
  double t = 1.0;  // c_k / x^k
  double prev = 1.0;
  for (int k = 1; k < 100; ++k) {
    const double odd = 2.0 * k - 1.0;
    t *= odd * odd / (8.0 * k * x);
    if (t > prev || t < 1e-18) break;  // asymptotic series: stop at smallest term
    prev = t;
    // k even contributes to P with sign (-1)^(k/2); k odd to Q with sign (-1)^((k+1)/2).
    if (k % 2 == 0) {
      p += ((k / 2) % 2 == 0 ? 1.0 : -1.0) * t;
    } else {
      q += (((k + 1) / 2) % 2 == 0 ? 1.0 : -1.0) * t;
    }
  }
  const double chi = x - 0.25 * std::numbers::pi;
  return std::sqrt(2.0 / (std::numbers::pi * x)) * (p * std::cos(chi) - q * std::sin(chi));
}

void check_cells(std::size_t n) {
  if (n == 0) throw std::invalid_argument("network needs at least one cell");
}

}  // namespace

double bessel_j0(double x) {
  if (!std::isfinite(x) || x < 0.0) {
    throw std::invalid_argument("bessel_j0: argument must be finite and nonnegative, got " +
                                std::to_string(x));
  }
  return x < kSeriesCutoff ? j0_series(x) : j0_asymptotic(x);
}

double time_correlation(double doppler_hz, double slot_s) {
  if (!(doppler_hz >= 0.0) || !std::isfinite(doppler_hz)) {
    throw std::invalid_argument("time_correlation: Doppler frequency must be >= 0");
  }
  if (!(slot_s > 0.0) || !std::isfinite(slot_s)) {
    throw std::invalid_argument("time_correlation: slot duration must be > 0");
  }
  if (doppler_hz == 0.0) return 1.0;
  return bessel_j0(2.0 * std::numbers::pi * doppler_hz * slot_s);
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double db_to_ratio(double db) { return std::pow(10.0, db / 10.0); }

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Geometry Geometry::circular(std::size_t n, double hap_user_m, double hap_spacing_m,
                            double pathloss_exponent) {
  check_cells(n);
  Geometry geom;
  geom.pathloss_exponent = pathloss_exponent;
  geom.haps.reserve(n);
  geom.users.reserve(n);
  if (n == 1) {
    geom.haps.push_back({0.0, 0.0});
    geom.users.push_back({hap_user_m, 0.0});
    return geom;
  }
  // Circumradius of a regular n-gon with side hap_spacing_m.
  const double radius = hap_spacing_m / (2.0 * std::sin(std::numbers::pi / static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    geom.haps.push_back({radius * c, radius * s});
    geom.users.push_back({(radius + hap_user_m) * c, (radius + hap_user_m) * s});
  }
  return geom;
}

LinkGains large_scale_gains(const Geometry& geom) {
  const std::size_t n = geom.cells();
  check_cells(n);
  if (geom.users.size() != n) throw std::invalid_argument("geometry: user/H-AP count mismatch");
  auto pathloss = [&](const Point& a, const Point& b) {
    const double d = distance(a, b);
    if (!(d > 0.0)) throw std::invalid_argument("geometry: zero distance between nodes");
    return std::pow(d, -geom.pathloss_exponent);
  };
  LinkGains out{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.h(i, j) = pathloss(geom.users[i], geom.haps[j]);
      if (i != j) out.g(i, j) = pathloss(geom.haps[i], geom.haps[j]);
    }
  }
  return out;
}

namespace {

// CN(0, 1): real and imaginary parts each N(0, 1/2).
std::complex<double> draw_cn(std::normal_distribution<double>& normal, Rng& rng) {
  const double re = normal(rng);
  const double im = normal(rng);
  return {re, im};
}

void fill_cn(ComplexMatrix& m, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = draw_cn(normal, rng);
}

}  // namespace

FadingProcess FadingProcess::stationary(std::size_t n, Rng& rng) {
  check_cells(n);
  FadingProcess f{ComplexMatrix(n, n), ComplexMatrix(n, n)};
  fill_cn(f.user_hap, rng);
  fill_cn(f.hap_hap, rng);
  return f;
}

FadingProcess evolve(const FadingProcess& prev, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw std::invalid_argument("evolve: rho must lie in [0, 1]");
  }
  if (rho == 1.0) return prev;
  const double spread = std::sqrt(1.0 - rho * rho);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  FadingProcess next = prev;
  for (ComplexMatrix* m : {&next.user_hap, &next.hap_hap}) {
    for (Eigen::Index c = 0; c < m->cols(); ++c)
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        (*m)(r, c) = rho * (*m)(r, c) + spread * draw_cn(normal, rng);
  }
  return next;
}

LinkGains compose(const LinkGains& scale, const FadingProcess& fading) {
  return {scale.h.cwiseProduct(fading.user_hap.cwiseAbs2()),
          scale.g.cwiseProduct(fading.hap_hap.cwiseAbs2())};
}

ChannelModel::ChannelModel(Geometry geom, double rho, Rng rng)
    : scale_(large_scale_gains(geom)), rho_(rho), rng_(std::move(rng)) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("ChannelModel: rho outside [0, 1]");
  fading_ = FadingProcess::stationary(scale_.cells(), rng_);
  gains_ = compose(scale_, fading_);
}

void ChannelModel::advance() {
  fading_ = evolve(fading_, rho_, rng_);
  gains_ = compose(scale_, fading_);
}

}  // namespace wpcn::channel
