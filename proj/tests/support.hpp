#pragma once

// Shared helpers for the unit and acceptance suites: finite differences,
// seeded random inputs and relative-error measures.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace ldvi::testing {

using Fn = std::function<double(const std::vector<double>&)>;

inline std::vector<double> central_difference(const Fn& f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a-b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-8) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i], floor));
  return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace ldvi::testing

namespace ldvi::testing {

/// ‖a-b‖∞ / max(‖a‖∞, ‖b‖∞, floor): relative error of a gradient vector.
inline double vec_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    na = std::max(na, std::abs(a[i]));
    nb = std::max(nb, std::abs(b[i]));
  }
  return diff / std::max({na, nb, floor});
}

/// Deterministic test point shared with the Python oracles:
/// v_j = 0.3 sin(1.7 (i + 1) + 0.9 j).
inline std::vector<double> oracle_point(std::size_t i, std::size_t d) {
  std::vector<double> v(d);
  for (std::size_t j = 0; j < d; ++j) {
    v[j] = 0.3 * std::sin(1.7 * static_cast<double>(i + 1) + 0.9 * static_cast<double>(j));
  }
  return v;
}

}  // namespace ldvi::testing
