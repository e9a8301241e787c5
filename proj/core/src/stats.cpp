#include "slowvol/stats.hpp"

#include <cmath>

#include "slowvol/common.hpp"

namespace slowvol {

LineFit wls_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& weight) {
  std::size_t n = x.size();
  if (n < 2 || y.size() != n || weight.size() != n)
    throw validation_error("wls_line: need matching x/y/weight with at least 2 points");
  double W = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    W += weight[i];
    Sx += weight[i] * x[i];
    Sy += weight[i] * y[i];
    Sxx += weight[i] * x[i] * x[i];
    Sxy += weight[i] * x[i] * y[i];
  }
  double det = W * Sxx - Sx * Sx;
  if (!(det > 0.0)) throw numerical_error("wls_line: degenerate design (constant x?)");
  LineFit fit;
  fit.slope = (W * Sxy - Sx * Sy) / det;
  fit.intercept = (Sy - fit.slope * Sx) / W;
  // chi-square-scaled slope variance; exact when weights are inverse variances
  double chi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - fit.intercept - fit.slope * x[i];
    chi2 += weight[i] * r * r;
  }
  double scale = n > 2 ? chi2 / static_cast<double>(n - 2) : 1.0;
  fit.slope_se = std::sqrt(std::max(scale, 1e-300) * W / det);
  fit.ci_lo = fit.slope - 2.0 * fit.slope_se;
  fit.ci_hi = fit.slope + 2.0 * fit.slope_se;
  return fit;
}

MeanVar mean_var(const std::vector<double>& v) {
  MeanVar mv;
  mv.n = static_cast<long>(v.size());
  if (v.empty()) return mv;
  double s = 0.0;
  for (double t : v) s += t;
  mv.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) return mv;
  double q = 0.0;
  for (double t : v) q += (t - mv.mean) * (t - mv.mean);
  mv.sd = std::sqrt(q / static_cast<double>(v.size() - 1));
  mv.se = mv.sd / std::sqrt(static_cast<double>(v.size()));
  return mv;
}

}  // namespace slowvol
