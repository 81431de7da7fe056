#pragma once

#include <span>

namespace harq_aoi {

struct MeanCi {
  double mean = 0.0;
  double halfwidth = 0.0;  // 95% Student-t halfwidth; 0 with fewer than two samples
};

MeanCi mean_ci95(std::span<const double> samples);

}  // namespace harq_aoi
