#pragma once

// Brute-force references for the evaluation metrics. They share no code with
// the library: long double accumulation, rank counting instead of sorting.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cfx/eval.hpp"

namespace cfx::testing::oracle {

inline constexpr int kTrials = 1000;
inline constexpr double kTol = 1e-9;

inline bool close(double a, double b) { return std::fabs(a - b) <= kTol * std::max(1.0, std::fabs(b)); }

inline long double oracle_im1(const std::vector<float>& x, const std::vector<float>& r1,
                              const std::vector<float>& r2, long double eps) {
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += ((long double)x[i] - r1[i]) * ((long double)x[i] - r1[i]);
    den += ((long double)x[i] - r2[i]) * ((long double)x[i] - r2[i]);
  }
  return num / (den + eps);
}

inline long double oracle_im2(const std::vector<float>& x, const std::vector<float>& r1,
                              const std::vector<float>& r2, long double eps) {
  long double num = 0, l1 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += ((long double)r1[i] - r2[i]) * ((long double)r1[i] - r2[i]);
    l1 += x[i] < 0 ? -(long double)x[i] : (long double)x[i];
  }
  return num / (l1 + eps);
}

/// k-th smallest (0-based) by counting ranks, no sorting.
inline double kth(const std::vector<double>& v, std::size_t k) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    if (less <= k && k < less + equal) return v[i];
  }
  return NAN;
}

inline double oracle_quantile(const std::vector<double>& v, double q) {
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const double a = kth(v, lo);
  if (lo + 1 == v.size()) return a;
  return a + (h - static_cast<double>(lo)) * (kth(v, lo + 1) - a);
}

inline double oracle_iqr(const std::vector<double>& v) { return oracle_quantile(v, 0.75) - oracle_quantile(v, 0.25); }

inline double oracle_plp(const std::vector<double>& a, const std::vector<double>& b) {
  std::size_t wins = 0, ties = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) ++wins;
    if (a[i] == b[i]) ++ties;
  }
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / static_cast<double>(a.size());
}

inline std::vector<double> random_values(std::mt19937_64& gen, std::size_t n, bool with_ties) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_int_distribution<int> small(0, 4);
  std::vector<double> v(n);
  for (auto& x : v) x = with_ties ? static_cast<double>(small(gen)) : u(gen);
  return v;
}

inline std::vector<float> random_image(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

struct SweepResult {
  int trials = 0;
  int im1_fail = 0;
  int im2_fail = 0;
  int iqr_fail = 0;
  int plp_fail = 0;
  int antisymmetry_fail = 0;
};

/// `trials` random small inputs per metric, compared at kTol.
inline SweepResult sweep(int trials, std::uint64_t seed) {
  SweepResult r;
  r.trials = trials;
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> img_len(1, 64), iqr_len(1, 40), plp_len(1, 200);
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = img_len(gen);
    const auto x = random_image(gen, n), r1 = random_image(gen, n), r2 = random_image(gen, n);
    r.im1_fail += !close(eval::im1_from(x, r1, r2, 1e-8), static_cast<double>(oracle_im1(x, r1, r2, 1e-8L)));
    r.im2_fail += !close(eval::im2_from(x, r1, r2, 1e-8), static_cast<double>(oracle_im2(x, r1, r2, 1e-8L)));
    const auto v = random_values(gen, iqr_len(gen), t % 3 == 0);
    r.iqr_fail += !close(eval::iqr(v), oracle_iqr(v));
    const std::size_t m = plp_len(gen);
    const auto a = random_values(gen, m, t % 2 == 0), b = random_values(gen, m, t % 2 == 0);
    const double ab = eval::paired_lower_prob(a, b);
    r.plp_fail += !close(ab, oracle_plp(a, b));
    r.antisymmetry_fail += ab + eval::paired_lower_prob(b, a) != 1.0;
  }
  return r;
}

}  // namespace cfx::testing::oracle
