#include "harq_aoi/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

namespace harq_aoi {

MeanCi mean_ci95(std::span<const double> samples) {
  MeanCi out;
  const auto n = samples.size();
  if (n == 0) return out;
  double sum = 0.0;
  for (double x : samples) sum += x;
  out.mean = sum / static_cast<double>(n);
  if (n < 2) return out;
  double ss = 0.0;
  for (double x : samples) ss += (x - out.mean) * (x - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  out.halfwidth = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(n));
  return out;
}

}  // namespace harq_aoi
