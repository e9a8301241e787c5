#include "slowvol/quadrature.hpp"

#include <cmath>
#include <algorithm>
#include <map>
#include <mutex>

#include "slowvol/common.hpp"

namespace slowvol {

namespace {

// QL with implicit shifts on a symmetric tridiagonal matrix, accumulating the
// first row of the eigenvector product only (all a quadrature rule needs:
// weight_i = mu0 * z_i^2). d is the diagonal, e the subdiagonal; both are
// overwritten. Eigenvalues land in d unsorted.
void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e, std::vector<double>& z) {
  const int n = static_cast<int>(d.size());
  e.push_back(0.0);
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m = l;
    do {
      for (m = l; m < n - 1; ++m) {
        double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) + dd == dd) break;
      }
      if (m != l) {
        if (iter++ == 50)
          throw numerical_error("GaussHermite: eigenvalue iteration failed to converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? r : -r));
        double s = 1.0, c = 1.0, p = 0.0;
        int i = m - 1;
        for (; i >= l; --i) {
          double f = s * e[i];
          double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {  // deflate: split off a converged eigenvalue
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          double fz = z[i + 1];
          z[i + 1] = s * z[i] + c * fz;
          z[i] = c * z[i] - s * fz;
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace

GaussHermite::GaussHermite(int n) {
  if (n < 1 || n > 1024) throw validation_error("GaussHermite: node count out of range");
  // Golub-Welsch on the probabilists' Hermite Jacobi matrix: zero diagonal,
  // subdiagonal sqrt(j). Eigenvalues are the nodes of the E[f(N)] rule and
  // the squared first eigenvector components are the weights (mass 1).
  std::vector<double> d(n, 0.0);
  std::vector<double> e(n > 1 ? n - 1 : 0);
  for (int j = 1; j < n; ++j) e[j - 1] = std::sqrt(static_cast<double>(j));
  std::vector<double> z(n, 0.0);
  z[0] = 1.0;
  tridiagonal_ql(d, e, z);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return d[a] < d[b]; });
  node_.resize(n);
  weight_.resize(n);
  for (int i = 0; i < n; ++i) {
    node_[i] = d[order[i]];
    weight_[i] = z[order[i]] * z[order[i]];
  }
  // The rule is symmetric by construction; remove the eigenvalue solver's
  // last-bit asymmetry so mirrored consumers agree exactly.
  for (int i = 0; i < n / 2; ++i) {
    int j = n - 1 - i;
    double mid = 0.5 * (node_[j] - node_[i]);
    node_[i] = -mid;
    node_[j] = mid;
    double w = 0.5 * (weight_[i] + weight_[j]);
    weight_[i] = w;
    weight_[j] = w;
  }
  if (n % 2 == 1) node_[n / 2] = 0.0;
}

const GaussHermite& GaussHermite::cached(int n) {
  static std::mutex mu;
  static std::map<int, GaussHermite> table;
  std::lock_guard<std::mutex> lock(mu);
  auto it = table.find(n);
  if (it == table.end()) it = table.emplace(n, GaussHermite(n)).first;
  return it->second;
}

namespace {

double simpson_leaf(double a, double b, double fa, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double simpson_rec(const std::function<double(double)>& f, double a, double fa, double b,
                   double fb, double m, double fm, double whole, double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson_leaf(a, m, fa, fm, flm);
  double right = simpson_leaf(m, b, fm, fb, frm);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth) {
  if (!(b > a)) return 0.0;
  double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
  double whole = simpson_leaf(a, b, fa, fb, fm);
  return simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

}  // namespace slowvol
