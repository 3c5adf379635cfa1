#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "wpcn/common.hpp"

namespace wpcn::channel {

using ComplexMatrix = Eigen::MatrixXcd;

/// Zeroth-order Bessel function of the first kind for x >= 0.
///
/// Ascending power series below x = 12, Hankel asymptotic expansion above.
/// Absolute error stays below 1e-9 on [0, 20] and well below that in
/// practice. Throws std::invalid_argument on negative or non-finite input.
double bessel_j0(double x);

/// Slot-to-slot correlation J0(2 pi f_d T) of the Jakes model.
double time_correlation(double doppler_hz, double slot_s);

double dbm_to_watts(double dbm);
double db_to_ratio(double db);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Point& a, const Point& b);

/// Node placement of an N-cell network.
struct Geometry {
  std::vector<Point> haps;
  std::vector<Point> users;
  double pathloss_exponent = 3.0;

  std::size_t cells() const { return haps.size(); }

  /// H-APs on a regular polygon with the given side length, user i placed
  /// `hap_user_m` radially outward from H-AP i. For N = 1 the H-AP sits at
  /// the origin and the user on the positive x axis.
  static Geometry circular(std::size_t n, double hap_user_m = 10.0, double hap_spacing_m = 15.0,
                           double pathloss_exponent = 3.0);
};

/// Nonnegative power gains. h(i, j): user i -> H-AP j. g(i, j): H-AP i -> H-AP j.
/// The diagonal of g is unused and kept at zero.
struct LinkGains {
  Matrix h;
  Matrix g;

  std::size_t cells() const { return static_cast<std::size_t>(h.rows()); }
};

/// Path loss d^-exponent with unit gain at 1 m. Throws std::invalid_argument
/// on coincident nodes.
LinkGains large_scale_gains(const Geometry& geom);

/// Small-scale complex coefficients, one per link, each unit-power Rayleigh.
struct FadingProcess {
  ComplexMatrix user_hap;
  ComplexMatrix hap_hap;

  /// Fresh draw from the stationary CN(0, 1) distribution.
  static FadingProcess stationary(std::size_t n, Rng& rng);
};

/// One step of the first-order Gauss-Markov recursion
/// x' = rho x + sqrt(1 - rho^2) e with e ~ CN(0, 1).
FadingProcess evolve(const FadingProcess& prev, double rho, Rng& rng);

/// h_ij = scale_ij |h~_ij|^2, likewise for g.
LinkGains compose(const LinkGains& scale, const FadingProcess& fading);

/// Owns the fading state of one simulation and hands out per-slot gains.
class ChannelModel {
 public:
  ChannelModel(Geometry geom, double rho, Rng rng);

  const LinkGains& gains() const { return gains_; }
  const LinkGains& scale() const { return scale_; }
  const FadingProcess& fading() const { return fading_; }
  double rho() const { return rho_; }
  std::size_t cells() const { return scale_.cells(); }

  /// Moves to the next slot.
  void advance();

 private:
  LinkGains scale_;
  double rho_;
  Rng rng_;
  FadingProcess fading_;
  LinkGains gains_;
};

}  // namespace wpcn::channel
