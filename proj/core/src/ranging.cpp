#include "rif/ranging.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "rif/error.hpp"

namespace rif {

namespace {

constexpr double kPi = std::numbers::pi;

// 2 * Phi^-1(0.75): interquartile range of the unit normal.
constexpr double kIqrUnitNormal = 1.3489795003921634;

// Folded-normal density of |e| for e ~ N(0, sigma), on [0, inf).
double folded_normal_pdf(double e, double sigma) {
  if (e < 0) return 0.0;
  const double inv = 1.0 / sigma;
  return 2.0 * inv / std::sqrt(2.0 * kPi) * std::exp(-0.5 * e * e * inv * inv);
}

}  // namespace

double RangeNoiseModel::effective_gamma() const {
  return gamma > 0 ? gamma : gamma_from_sigma(sigma_r);
}

RangePrediction predict_range(const Vector3& position, const Vector3& anchor) {
  const Vector3 diff = position - anchor;
  const double dist = diff.norm();
  if (dist < 1e-6) {
    std::ostringstream os;
    os << "predict_range: degenerate geometry, distance " << dist << " m";
    throw DegenerateRangeError(os.str());
  }
  return RangePrediction{dist, diff.transpose() / dist};
}

double half_cauchy_pdf(double e, double gamma) {
  if (e < 0) return 0.0;
  const double u = e / gamma;
  return (2.0 / (kPi * gamma)) / (1.0 + u * u);
}

double decision_boundary(double sigma_r, double gamma) {
  if (folded_normal_pdf(0.0, sigma_r) <= half_cauchy_pdf(0.0, gamma)) {
    std::ostringstream os;
    os << "decision_boundary: LOS density does not dominate at e=0 (sigma_r="
       << sigma_r << ", gamma=" << gamma << ")";
    throw NoCrossingError(os.str());
  }
  auto diff = [&](double e) {
    return folded_normal_pdf(e, sigma_r) - half_cauchy_pdf(e, gamma);
  };
  // Bracket the first sign change; the Gaussian side decays faster, so a
  // crossing always exists once the peak dominates.
  double lo = 0.0;
  double hi = sigma_r;
  while (diff(hi) > 0) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    (diff(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

LossValue robust_loss(double e, const RangeNoiseModel& model) {
  const double estar = model.kind == NoiseKind::asymmetric
                           ? decision_boundary(model.sigma_r, model.effective_gamma())
                           : 0.0;
  return robust_loss(e, model, estar);
}

LossValue robust_loss(double e, const RangeNoiseModel& model, double cached_estar) {
  const double s2 = model.sigma_r * model.sigma_r;
  switch (model.kind) {
    case NoiseKind::gaussian:
      return {0.5 * e * e / s2, 1.0 / s2};
    case NoiseKind::huber: {
      const double u = std::abs(e) / model.sigma_r;
      if (u <= model.huber_k) return {0.5 * e * e / s2, 1.0 / s2};
      return {model.huber_k * u - 0.5 * model.huber_k * model.huber_k,
              model.huber_k / (model.sigma_r * std::abs(e))};
    }
    case NoiseKind::cauchy: {
      const double k2 = model.cauchy_k * model.cauchy_k;
      const double u2 = e * e / (k2 * s2);
      return {0.5 * k2 * std::log1p(u2), (1.0 / s2) / (1.0 + u2)};
    }
    case NoiseKind::asymmetric: {
      const double g = model.effective_gamma();
      const double estar = cached_estar;
      if (e <= estar) return {0.5 * e * e / s2, 1.0 / s2};
      const double rho = 0.5 * estar * estar / s2 +
                         std::log1p(e * e / (g * g)) -
                         std::log1p(estar * estar / (g * g));
      // rho'(e) = 2e/(g^2 + e^2) on the tail branch.
      return {rho, 2.0 / (g * g + e * e)};
    }
  }
  return {};
}

double gamma_from_sigma(double sigma_r) {
  if (sigma_r <= 0) {
    throw Error("gamma_from_sigma: sigma_r must be positive");
  }
  return kIqrUnitNormal * sigma_r;
}

}  // namespace rif
