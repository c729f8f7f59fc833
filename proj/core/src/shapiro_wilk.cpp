// Shapiro-Wilk W and its p-value following Royston's algorithm AS R94.

#include "charme/error.hpp"
#include "charme/mvn_tests.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace charme {

namespace {

double poly(const double* cc, int nord, double x) {
  double result = cc[0];
  if (nord > 1) {
    double p = x * cc[nord - 1];
    for (int j = nord - 2; j > 0; --j) p = (p + cc[j]) * x;
    result += p;
  }
  return result;
}

}  // namespace

TestResult shapiro_wilk(std::span<const double> sample) {
  const auto n = static_cast<long>(sample.size());
  if (n < 3 || n > 5000)
    throw Error(ErrorCode::SampleSizeOutOfRange, "Shapiro-Wilk needs 3 <= n <= 5000, got " + std::to_string(n));

  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
  static constexpr double g[] = {-2.273, 0.459};
  constexpr double small = 1e-19;

  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double an = static_cast<double>(n);
  const long half = n / 2;

  // coefficients a[1..half] for the upper half; the lower half mirrors them with a minus sign
  std::vector<double> a(static_cast<std::size_t>(half) + 1, 0.0);
  const boost::math::normal_distribution<double> std_normal;
  if (n == 3) {
    a[1] = std::sqrt(0.5);
  } else {
    const double an25 = an + 0.25;
    std::vector<double> m(static_cast<std::size_t>(half) + 1);
    double summ2 = 0.0;
    for (long i = 1; i <= half; ++i) {
      m[static_cast<std::size_t>(i)] = boost::math::quantile(std_normal, (double(i) - 0.375) / an25);
      summ2 += m[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(i)];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, 6, rsn) - m[1] / ssumm2;
    long first;
    double fac;
    if (n > 5) {
      first = 3;
      const double a2 = -m[2] / ssumm2 + poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[1] * m[1] - 2.0 * m[2] * m[2]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[2] = a2;
    } else {
      first = 2;
      fac = std::sqrt((summ2 - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1));
    }
    a[1] = a1;
    for (long i = first; i <= half; ++i) a[static_cast<std::size_t>(i)] = -m[static_cast<std::size_t>(i)] / fac;
  }

  const double range = x.back() - x.front();
  if (range < small) throw Error(ErrorCode::SingularCovariance, "Shapiro-Wilk sample is constant");

  // W as the squared correlation between the scaled data and the coefficients
  std::vector<double> coef(static_cast<std::size_t>(n));
  for (long i = 0, j = n - 1; i < n; ++i, --j) {
    if (i < j) coef[static_cast<std::size_t>(i)] = -a[static_cast<std::size_t>(i + 1)];
    else if (i > j) coef[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(j + 1)];
    else coef[static_cast<std::size_t>(i)] = 0.0;
  }
  double sa = 0.0, sx = 0.0;
  for (long i = 0; i < n; ++i) {
    sa += coef[static_cast<std::size_t>(i)];
    sx += x[static_cast<std::size_t>(i)] / range;
  }
  sa /= an;
  sx /= an;
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (long i = 0; i < n; ++i) {
    const double asa = coef[static_cast<std::size_t>(i)] - sa;
    const double xsx = x[static_cast<std::size_t>(i)] / range - sx;
    ssa += asa * asa;
    ssx += xsx * xsx;
    sax += asa * xsx;
  }
  // 1 - W computed directly to keep precision when W is close to 1
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
  TestResult out;
  out.stat = 1.0 - w1;

  if (n == 3) {
    constexpr double pi6 = 1.90985931710274;  // 6 / pi
    constexpr double stqr = 1.04719755119660;  // pi / 3
    out.p_value = std::clamp(pi6 * (std::asin(std::sqrt(out.stat)) - stqr), 0.0, 1.0);
    return out;
  }

  double y = std::log(w1);
  const double xx = std::log(an);
  double mean, sd;
  if (n <= 11) {
    const double gamma = poly(g, 2, an);
    if (y >= gamma) {
      out.p_value = 1e-99;
      return out;
    }
    y = -std::log(gamma - y);
    mean = poly(c3, 4, an);
    sd = std::exp(poly(c4, 4, an));
  } else {
    mean = poly(c5, 4, xx);
    sd = std::exp(poly(c6, 3, xx));
  }
  out.p_value = boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(mean, sd), y));
  return out;
}

}  // namespace charme
