#include "rif/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "rif/error.hpp"

namespace rif {

void Trajectory::sort_by_time() {
  std::stable_sort(points.begin(), points.end(),
                   [](const TrajectoryPoint& a, const TrajectoryPoint& b) {
                     return a.t < b.t;
                   });
}

bool Trajectory::strictly_increasing() const {
  for (size_t i = 1; i < points.size(); ++i) {
    if (points[i].t <= points[i - 1].t) return false;
  }
  return true;
}

ApeReport ape(const Trajectory& estimate, const Trajectory& ground_truth,
              double max_dt) {
  if (ground_truth.points.empty() || estimate.points.empty()) {
    throw NoMatchesError("ape: empty trajectory");
  }
  const auto& gt = ground_truth.points;

  ApeReport report;
  double sum = 0.0, sum_sq = 0.0;
  for (const TrajectoryPoint& p : estimate.points) {
    if (p.t < gt.front().t - max_dt || p.t > gt.back().t + max_dt) continue;

    Vector3 ref;
    if (p.t <= gt.front().t) {
      ref = gt.front().position;
    } else if (p.t >= gt.back().t) {
      ref = gt.back().position;
    } else {
      const auto it = std::upper_bound(
          gt.begin(), gt.end(), p.t,
          [](double t, const TrajectoryPoint& q) { return t < q.t; });
      const TrajectoryPoint& hi = *it;
      const TrajectoryPoint& lo = *(it - 1);
      const double w = (p.t - lo.t) / (hi.t - lo.t);
      ref = (1 - w) * lo.position + w * hi.position;
    }

    const double err = (p.position - ref).norm();
    report.errors.push_back(err);
    report.timestamps.push_back(p.t);
    sum += err;
    sum_sq += err * err;
    report.max = std::max(report.max, err);
  }

  report.matched_pairs = static_cast<int>(report.errors.size());
  if (report.matched_pairs == 0) {
    throw NoMatchesError("ape: no timestamps matchable within max_dt");
  }
  report.mean = sum / report.matched_pairs;
  report.rmse = std::sqrt(sum_sq / report.matched_pairs);
  report.failed = report.mean > kApeFailThreshold;
  return report;
}

}  // namespace rif
