#pragma once

#include <vector>

namespace slowvol {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double ci_lo = 0.0;  // slope +/- 2 se
  double ci_hi = 0.0;
};

// Weighted least squares y ~ intercept + slope * x; weights are inverse
// variances. Slope standard error comes from the weighted residual scatter.
LineFit wls_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& weight);

struct MeanVar {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  long n = 0;
};

MeanVar mean_var(const std::vector<double>& v);

}  // namespace slowvol
