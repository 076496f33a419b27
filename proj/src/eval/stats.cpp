#include <cmath>
#include <limits>
#include <numeric>

#include "gdaip/metrics.hpp"

namespace gdaip::eval {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); }

double sample_variance(std::span<const double> x, double m) {
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / (x.size() - 1);
}

// Continued fraction for I_x(a, b), valid for x < (a + 1) / (a + b + 2).
double beta_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

TTestResult from_statistic(double t, double df) {
  TTestResult r;
  r.t = t;
  r.df = df;
  r.p = std::isinf(t) ? 0.0 : regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return r;
}

TTestResult degenerate_result(double df) {
  TTestResult r;
  r.t = kNaN;
  r.p = kNaN;
  r.df = df;
  r.degenerate = true;
  return r;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw InputError("incomplete beta needs positive shape parameters");
  if (!(x >= 0.0 && x <= 1.0)) throw InputError("incomplete beta argument outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw InputError("degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

TTestResult welch_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) throw InputError("Welch test needs at least two samples per group");
  const double mx = mean(x), my = mean(y);
  const double sx = sample_variance(x, mx) / x.size();
  const double sy = sample_variance(y, my) / y.size();
  const double se2 = sx + sy;
  if (se2 == 0.0) return degenerate_result(kNaN);
  const double df = se2 * se2 / (sx * sx / (x.size() - 1) + sy * sy / (y.size() - 1));
  return from_statistic((mx - my) / std::sqrt(se2), df);
}

TTestResult paired_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("paired test needs equally many samples");
  if (x.size() < 2) throw InputError("paired test needs at least two pairs");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - y[i];
  const double md = mean(d);
  const double var = sample_variance(d, md);
  const double df = static_cast<double>(d.size() - 1);
  if (var == 0.0) return degenerate_result(df);
  return from_statistic(md / std::sqrt(var / d.size()), df);
}

}  // namespace gdaip::eval
