#pragma once

#include <string>

#include "rif/geometry.hpp"

namespace rif {

/// Site guard: measured ranges outside (0, 200) m are rejected at ingestion.
inline constexpr double kMaxRange = 200.0;

/// One SS-TWR ranging output.
struct RangeMeasurement {
  double t = 0.0;         // s
  std::string anchor_id;
  double range = 0.0;     // m
  // Simulator ground truth only; the estimator never reads it.
  bool los = true;

  bool in_site_guard() const { return range > 0.0 && range < kMaxRange; }
};

enum class NoiseKind { gaussian, huber, cauchy, asymmetric };

/// Robust-loss constants at 95% Gaussian efficiency.
inline constexpr double kHuberDefault = 1.345;
inline constexpr double kCauchyDefault = 2.3849;

/// Ranging noise model: LOS Gaussian std plus the NLOS half-Cauchy scale,
/// with baseline m-estimator thresholds (applied to the whitened residual).
struct RangeNoiseModel {
  NoiseKind kind = NoiseKind::asymmetric;
  double sigma_r = 0.15;            // m
  double gamma = 0.0;               // m; 0 = derive via gamma_from_sigma
  double huber_k = kHuberDefault;
  double cauchy_k = kCauchyDefault;

  bool valid() const {
    return sigma_r >= 0.01 && sigma_r <= 1.0 && effective_gamma() > 0;
  }
  double effective_gamma() const;
};

/// Fixed UWB transceiver with a pre-surveyed position. Anchors enter the
/// graph as variables with a tight Gaussian prior, not as constants.
struct Anchor {
  std::string id;
  Vector3 position = Vector3::Zero();
  double prior_sigma = 0.01;  // m
};

struct RangePrediction {
  double range = 0.0;                          // m
  Eigen::RowVector3d jacobian;                 // d(range)/d(position)
};

/// Euclidean distance and its Jacobian w.r.t. the device position.
/// Throws DegenerateRangeError below 1e-6 m; callers skip or regularize.
RangePrediction predict_range(const Vector3& position, const Vector3& anchor);

/// Half-Cauchy density (2/(pi*gamma)) / (1 + (e/gamma)^2) on e >= 0; 0 below.
double half_cauchy_pdf(double e, double gamma);

/**
 * Smallest e > 0 where the LOS and NLOS error-magnitude densities are equal:
 * folded normal (|e| of N(0, sigma_r)) vs half-Cauchy(gamma). Beyond it the
 * NLOS hypothesis is the more likely one. Bisection to 1e-9 m.
 *
 * Throws NoCrossingError when the LOS density does not dominate at e=0
 * (gamma too small relative to sigma_r).
 */
double decision_boundary(double sigma_r, double gamma);

struct LossValue {
  double rho = 0.0;     // unitless loss
  double weight = 0.0;  // IRLS weight rho'(e)/e, 1/m^2
};

/**
 * Robust loss on the raw residual e = measured - predicted (meters).
 *
 * asymmetric: quadratic Gaussian branch for e <= e*, half-Cauchy log-tail
 * beyond (continuous at e*, derivative kink accepted). Negative residuals
 * are always in the Gaussian branch: NLOS can only lengthen a range.
 * Baselines: gaussian is the pure quadratic; huber/cauchy act on the
 * whitened residual e/sigma_r with thresholds huber_k / cauchy_k.
 */
LossValue robust_loss(double e, const RangeNoiseModel& model);

/// Same as robust_loss but with the decision boundary precomputed, for hot
/// paths that evaluate the asymmetric loss repeatedly.
LossValue robust_loss(double e, const RangeNoiseModel& model, double cached_estar);

/// IQR heuristic for the half-Cauchy scale: gamma = 2*Phi^-1(0.75)*sigma_r.
double gamma_from_sigma(double sigma_r);

}  // namespace rif
