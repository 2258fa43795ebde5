#pragma once

#include <cmath>

#include "geokernel/common.hpp"

namespace geokernel::stats {

inline constexpr double kSqrt2 = 1.4142135623730951;
inline constexpr double kSqrt2Pi = 2.5066282746310002;

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

/// Inverse standard normal CDF (Wichura's AS241, double precision).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail("normal_quantile: p must be in (0,1)");
  double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                  0.24178072517745061177) * r + 1.27045825245236838258) * r +
                3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                  0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                  1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

/// Normal distribution restricted to [lo, hi], renormalized. Sampling is by
/// inverse CDF so a fixed uniform stream gives a fixed draw sequence.
struct TruncatedNormal {
  double mu;
  double sigma;
  double lo;
  double hi;
  double z_lo;      // (lo - mu) / sigma
  double z_hi;      // (hi - mu) / sigma
  double cdf_lo;
  double cdf_hi;
  double mass;      // cdf_hi - cdf_lo

  TruncatedNormal(double mu_, double sigma_, double lo_ = -1.0, double hi_ = 1.0)
      : mu(mu_), sigma(sigma_), lo(lo_), hi(hi_) {
    if (!(sigma > 0.0)) fail("truncated normal: sigma must be positive");
    if (!(lo < hi)) fail("truncated normal: empty support");
    z_lo = (lo - mu) / sigma;
    z_hi = (hi - mu) / sigma;
    cdf_lo = normal_cdf(z_lo);
    cdf_hi = normal_cdf(z_hi);
    mass = cdf_hi - cdf_lo;
  }

  double sample(double u01) const {
    double y = cdf_lo + u01 * mass;
    y = std::min(std::max(y, 1e-300), 1.0 - 1e-16);
    double x = mu + sigma * normal_quantile(y);
    return std::min(hi, std::max(lo, x));
  }

  double log_pdf(double x) const {
    if (x < lo || x > hi) fail("truncated normal: point outside support");
    if (mass < 1e-300) fail("truncated normal: degenerate truncation");
    double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(kSqrt2Pi * sigma) - std::log(mass);
  }

  double cdf(double x) const {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    return (normal_cdf((x - mu) / sigma) - cdf_lo) / mass;
  }

  double mean() const {
    return mu + sigma * (normal_pdf(z_lo) - normal_pdf(z_hi)) / mass;
  }

  /// d/dmu log p(x; mu): the standardized residual plus the truncation
  /// correction from the moving normalizer.
  double score_mu(double x) const {
    if (mass < 1e-300) fail("truncated normal: degenerate truncation");
    double z = (x - mu) / sigma;
    double correction =
        (std::exp(-0.5 * z_hi * z_hi) - std::exp(-0.5 * z_lo * z_lo)) / (kSqrt2Pi * sigma * mass);
    return z / sigma + correction;
  }
};

}  // namespace geokernel::stats
