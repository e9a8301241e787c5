#pragma once

#include <functional>
#include <vector>

namespace slowvol {

// Gauss-Hermite rule in probabilists' normalization: integrate(f) approximates
// E[f(N)] for N ~ N(0,1). Weights sum to 1, nodes are symmetric around 0.
class GaussHermite {
 public:
  explicit GaussHermite(int n);

  // Shared immutable tables, built once per node count.
  static const GaussHermite& cached(int n);

  int size() const { return static_cast<int>(node_.size()); }
  const std::vector<double>& nodes() const { return node_; }
  const std::vector<double>& weights() const { return weight_; }

  template <typename F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < node_.size(); ++i) acc += weight_[i] * f(node_[i]);
    return acc;
  }

 private:
  std::vector<double> node_;
  std::vector<double> weight_;
};

// Adaptive Simpson on [a,b] with absolute tolerance; recursion depth capped.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 48);

}  // namespace slowvol
