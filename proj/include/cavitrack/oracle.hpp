#pragma once

// Closed-form reference for the cylindrical (pillbox) cavity: Bessel functions
// of integer order, their zeros, labeled resonant frequencies and the radius
// where the TM010 and TE111 modes exchange the fundamental.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "cavitrack/errors.hpp"

namespace cavitrack {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Eigenfrequency in Hz of a squared wavenumber in 1/m^2.
inline double frequency_from_lambda(double lambda) {
  return kSpeedOfLight * std::sqrt(std::max(lambda, 0.0)) / (2.0 * std::numbers::pi);
}

inline double lambda_from_frequency(double f) {
  const double k = 2.0 * std::numbers::pi * f / kSpeedOfLight;
  return k * k;
}

enum class ModeFamily { TM, TE };

inline std::string to_string(ModeFamily f) { return f == ModeFamily::TM ? "TM" : "TE"; }

namespace bessel {

inline constexpr double kSeriesLimit = 12.0;

/// Ascending power series of J_m in extended precision.
inline long double series(int m, long double x) {
  const long double half = x / 2.0L;
  long double term = 1.0L;
  for (int k = 1; k <= m; ++k) term *= half / k;
  long double sum = term;
  const long double q = -half * half;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<long double>(k) * (k + m));
    sum += term;
    if (std::abs(term) <= 1e-22L * std::abs(sum) && k > m) break;
  }
  return sum;
}

/// Miller's backward recurrence normalized by J_0 + 2 sum J_2k = 1.
inline long double backward(int m, long double x) {
  int start = static_cast<int>(x) + m + 40;
  start += start % 2;
  long double jp1 = 0.0L, j = 1e-300L, result = 0.0L, norm = 0.0L;
  for (int k = start; k >= 1; --k) {
    const long double jm1 = (2.0L * k / x) * j - jp1;
    jp1 = j;
    j = jm1;
    // j now holds J_{k-1}
    if (k - 1 == m) result = j;
    if (k - 1 > 0 && (k - 1) % 2 == 0) norm += 2.0L * j;
    if (std::abs(j) > 1e250L) {
      j *= 1e-250L;
      jp1 *= 1e-250L;
      result *= 1e-250L;
      norm *= 1e-250L;
    }
  }
  norm += j;  // J_0
  return result / norm;
}

}  // namespace bessel

/// Bessel function of the first kind J_m(x) for integer m >= 0.
inline double bessel_j(int m, double x) {
  if (m < 0) return (m % 2 ? -1.0 : 1.0) * bessel_j(-m, x);
  if (x < 0.0) return (m % 2 ? -1.0 : 1.0) * bessel_j(m, -x);
  if (x == 0.0) return m == 0 ? 1.0 : 0.0;
  if (x <= bessel::kSeriesLimit) return static_cast<double>(bessel::series(m, x));
  return static_cast<double>(bessel::backward(m, x));
}

/// J_m'(x) = (J_{m-1}(x) - J_{m+1}(x)) / 2
inline double bessel_j_prime(int m, double x) {
  return 0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x));
}

/// J_m''(x) from Bessel's equation.
inline double bessel_j_second(int m, double x) {
  return -bessel_j_prime(m, x) / x - (1.0 - static_cast<double>(m) * m / (x * x)) * bessel_j(m, x);
}

namespace detail {

template <class F, class DF>
double nth_positive_root(F f, DF df, int n, double x_start) {
  const double h = 0.05;
  double a = x_start, fa = f(a);
  int found = 0;
  for (int steps = 0; steps < 100000; ++steps) {
    const double b = a + h, fb = f(b);
    if (fa == 0.0 || (fa < 0.0) != (fb < 0.0)) {
      if (++found == n) {
        double lo = a, hi = b, flo = fa;
        for (int i = 0; i < 60 && hi - lo > 1e-10; ++i) {
          const double mid = 0.5 * (lo + hi), fm = f(mid);
          if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        double x = 0.5 * (lo + hi);
        for (int i = 0; i < 8; ++i) {
          const double d = df(x);
          if (d == 0.0) break;
          const double step = f(x) / d;
          x -= step;
          if (std::abs(step) < 1e-16 * x) break;
        }
        return x;
      }
    }
    a = b;
    fa = fb;
  }
  throw ConvergenceError("bessel root search exhausted");
}

}  // namespace detail

/// n-th positive zero x_{mn} of J_m.
inline double bessel_zero(int m, int n) {
  if (m < 0 || n < 1) throw DomainError("bessel_zero: need m >= 0 and n >= 1");
  return detail::nth_positive_root([m](double x) { return bessel_j(m, x); },
                                   [m](double x) { return bessel_j_prime(m, x); }, n,
                                   m == 0 ? 1e-3 : 0.5 * m + 0.1);
}

/// n-th positive zero x'_{mn} of J_m' (x = 0 excluded).
inline double bessel_prime_zero(int m, int n) {
  if (m < 0 || n < 1) throw DomainError("bessel_prime_zero: need m >= 0 and n >= 1");
  if (m == 0) return bessel_zero(1, n);  // J_0' = -J_1
  return detail::nth_positive_root([m](double x) { return bessel_j_prime(m, x); },
                                   [m](double x) { return bessel_j_second(m, x); }, n,
                                   0.5 * m + 0.1);
}

struct ModeLabel {
  ModeFamily family = ModeFamily::TM;
  int m = 0;  ///< azimuthal
  int n = 1;  ///< radial
  int p = 0;  ///< axial
  int degeneracy = 1;

  [[nodiscard]] std::string name() const {
    return to_string(family) + std::to_string(m) + std::to_string(n) + std::to_string(p);
  }

  [[nodiscard]] bool valid() const {
    if (n < 1 || m < 0 || p < 0) return false;
    if (family == ModeFamily::TE && p < 1) return false;
    return degeneracy == (m >= 1 ? 2 : 1);
  }

  friend bool operator==(const ModeLabel&, const ModeLabel&) = default;
};

struct LabeledFrequency {
  ModeLabel label;
  double frequency = 0.0;  ///< Hz
};

/// f = c / (2 pi) sqrt((x / r)^2 + (p pi / l)^2)
inline double pillbox_frequency(const ModeLabel& mode, double r, double l) {
  const double x = mode.family == ModeFamily::TM ? bessel_zero(mode.m, mode.n)
                                                 : bessel_prime_zero(mode.m, mode.n);
  const double kz = mode.p * std::numbers::pi / l;
  return kSpeedOfLight / (2.0 * std::numbers::pi) * std::sqrt(std::pow(x / r, 2) + kz * kz);
}

inline constexpr int kMaxBesselIndex = 10;

/// The `count` lowest distinct modes, ascending; each degenerate pair appears
/// once with degeneracy 2. Ties are ordered by (family, m, n, p).
inline std::vector<LabeledFrequency> pillbox_frequencies(double r, double l, int count) {
  if (!(r > 0.0) || !(l > 0.0)) throw DomainError("pillbox_frequencies: r and l must be positive");
  if (count < 1) return {};

  std::vector<double> tm_zero((kMaxBesselIndex + 1) * kMaxBesselIndex);
  std::vector<double> te_zero(tm_zero.size());
  for (int m = 0; m <= kMaxBesselIndex; ++m)
    for (int n = 1; n <= kMaxBesselIndex; ++n) {
      tm_zero[m * kMaxBesselIndex + n - 1] = bessel_zero(m, n);
      te_zero[m * kMaxBesselIndex + n - 1] = bessel_prime_zero(m, n);
    }

  const double scale = kSpeedOfLight / (2.0 * std::numbers::pi);
  auto freq = [&](double x, int p) {
    const double kz = p * std::numbers::pi / l;
    return scale * std::sqrt(std::pow(x / r, 2) + kz * kz);
  };

  // Axial range large enough that every omitted mode is above the cutoff.
  const double x_min = std::min(*std::min_element(tm_zero.begin(), tm_zero.end()),
                                *std::min_element(te_zero.begin(), te_zero.end()));
  std::vector<LabeledFrequency> all;
  int p_max = 0;
  while (true) {
    all.clear();
    for (int m = 0; m <= kMaxBesselIndex; ++m)
      for (int n = 1; n <= kMaxBesselIndex; ++n)
        for (int p = 0; p <= p_max; ++p) {
          const int deg = m >= 1 ? 2 : 1;
          all.push_back({{ModeFamily::TM, m, n, p, deg}, freq(tm_zero[m * kMaxBesselIndex + n - 1], p)});
          if (p >= 1)
            all.push_back({{ModeFamily::TE, m, n, p, deg}, freq(te_zero[m * kMaxBesselIndex + n - 1], p)});
        }
    std::sort(all.begin(), all.end(),
              [](const LabeledFrequency& a, const LabeledFrequency& b) { return a.frequency < b.frequency; });
    if (static_cast<int>(all.size()) >= count) {
      const double cutoff = all[count - 1].frequency;
      const double next_axial = freq(x_min, p_max + 1);
      // smallest zero with an index beyond the table
      const double beyond = std::min(bessel_zero(kMaxBesselIndex + 1, 1), bessel_zero(0, kMaxBesselIndex + 1));
      const double beyond_te = std::min(bessel_prime_zero(kMaxBesselIndex + 1, 1),
                                        bessel_prime_zero(0, kMaxBesselIndex + 1));
      if (next_axial > cutoff) {
        if (freq(std::min(beyond, beyond_te), 0) <= cutoff)
          throw UnsupportedError("pillbox_frequencies: count exceeds the tabulated Bessel range");
        break;
      }
    }
    if (++p_max > 1000) throw UnsupportedError("pillbox_frequencies: axial range exhausted");
  }

  auto key = [](const ModeLabel& a) { return std::make_tuple(static_cast<int>(a.family), a.m, a.n, a.p); };
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i + 1;
    while (j < all.size() && all[j].frequency - all[i].frequency <= 1e-12 * all[i].frequency) ++j;
    std::sort(all.begin() + static_cast<std::ptrdiff_t>(i), all.begin() + static_cast<std::ptrdiff_t>(j),
              [&](const LabeledFrequency& a, const LabeledFrequency& b) { return key(a.label) < key(b.label); });
    i = j;
  }
  all.resize(static_cast<std::size_t>(count));
  return all;
}

/// Frequencies with degenerate modes repeated, truncated to `count` entries.
inline std::vector<double> pillbox_spectrum(double r, double l, int count) {
  std::vector<double> out;
  for (const auto& lf : pillbox_frequencies(r, l, count)) {
    for (int d = 0; d < lf.label.degeneracy; ++d) out.push_back(lf.frequency);
    if (static_cast<int>(out.size()) >= count) break;
  }
  out.resize(static_cast<std::size_t>(count));
  return out;
}

/// Radius where TM010 and TE111 coincide: r* = l sqrt(x01^2 - x'11^2) / pi.
inline double crossing_radius(double l) {
  if (!(l > 0.0)) throw DomainError("crossing_radius: l must be positive");
  const double x01 = bessel_zero(0, 1);
  const double xp11 = bessel_prime_zero(1, 1);
  return l * std::sqrt(x01 * x01 - xp11 * xp11) / std::numbers::pi;
}

}  // namespace cavitrack
