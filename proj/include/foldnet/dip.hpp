#pragma once
#include <vector>

namespace foldnet {

struct DipResult {
  double dip = 0.0;
  double modal_lo = 0.0;  // modal interval endpoints (sample values)
  double modal_hi = 0.0;
};

// Hartigan & Hartigan's dip: sup-distance from the empirical CDF to the
// nearest unimodal CDF, via the greatest-convex-minorant / least-concave-
// majorant iteration (AS 217). Input need not be sorted. All-equal samples
// return 0 by convention; otherwise dip is in [1/(2n), 1/4].
DipResult dip_statistic(std::vector<double> sample);

}  // namespace foldnet
