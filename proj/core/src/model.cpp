#include "charme/model.hpp"
#include "charme/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace charme {

double VolatilitySpec::evaluate(const Eigen::Ref<const Vector>& lags) const {
  if (kind == Kind::ConstantOne) return 1.0;
  return forward(*net, lags)[0];
}

double InnovationSpec::abs_moment(double m, Index d) const {
  if (!(m >= 1.0) || !std::isfinite(m))
    throw Error(ErrorCode::MomentUndefined, "norm moments are defined for finite m >= 1");
  if (d < 1) throw Error(ErrorCode::ShapeMismatch, "dimension must be positive");
  const double dd = static_cast<double>(d);
  switch (family) {
    case Family::StandardGaussian:
    case Family::ScaledGaussian: {
      // ||eps|| / sigma is chi-distributed with d degrees of freedom:
      // E chi^m = 2^(m/2) Gamma((d+m)/2) / Gamma(d/2).
      const double log_chi = 0.5 * m * std::log(2.0) + std::lgamma(0.5 * (dd + m)) - std::lgamma(0.5 * dd);
      const double scale = family == Family::ScaledGaussian ? std::pow(sigma, m) : 1.0;
      return scale * std::exp(log_chi);
    }
    case Family::TwoPointHalf: {
      // ||eps||^2 counts ones among d fair coins.
      double total = 0.0;
      for (Index j = 1; j <= d; ++j) {
        const double log_binom = std::lgamma(dd + 1) - std::lgamma(double(j) + 1) - std::lgamma(dd - j + 1);
        total += std::exp(log_binom - dd * std::log(2.0)) * std::pow(double(j), 0.5 * m);
      }
      return total;
    }
  }
  return 0.0;
}

double InnovationSpec::norm_moment(double m, Index d) const {
  return std::pow(abs_moment(m, d), 1.0 / m);
}

std::size_t CharmeModel::theta_size() const noexcept {
  std::size_t n = 0;
  for (const auto& e : experts) n += e.f.parameter_count();
  return n;
}

bool ValidationReport::has(std::string_view code) const noexcept {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.code == code; });
}

namespace {

void check_volatility(const VolatilitySpec& g, Index input, std::size_t k, ValidationReport& report) {
  const std::string where = "expert " + std::to_string(k + 1) + " volatility: ";
  auto add = [&](const char* code, const std::string& msg) {
    report.violations.push_back({code, where + msg});
  };
  if (g.kind == VolatilitySpec::Kind::ConstantOne) {
    if (g.net) add("VolatilityShape", "constant volatility must not carry a network");
    return;
  }
  if (!g.net) {
    add("VolatilityShape", "network volatility without a network");
    return;
  }
  const auto& net = *g.net;
  if (net.input_width() != input || net.output_width() != 1)
    add("VolatilityShape", "network must map R^(d*p) to R");
  if (!(g.floor > 0.0) || !std::isfinite(g.floor)) {
    add("VolatilityFloor", "floor must be positive");
    return;
  }
  const std::size_t last = net.depth() - 1;
  if ((net.weight(last).array() < 0.0).any()) add("VolatilityFloor", "last-layer weights must be nonnegative");
  if ((net.bias(last).array() < g.floor).any()) add("VolatilityFloor", "last-layer bias is below the floor");
  if (net.depth() >= 2 && !net.activation().positive_valued())
    add("VolatilityFloor", "activation must be positive-valued");
  if (net.depth() == 1 && !net.weight(0).isZero(0.0))
    add("VolatilityFloor", "a single affine layer is unbounded below unless its weights vanish");
}

}  // namespace

ValidationReport validate_model(const CharmeModel& model) {
  ValidationReport report;
  auto add = [&](const char* code, std::string msg) { report.violations.push_back({code, std::move(msg)}); };

  if (model.d < 1) add("NonPositiveDimension", "d must be at least 1");
  if (model.p < 1) add("NonPositiveLag", "p must be at least 1");
  if (model.K < 1) add("NonPositiveRegimeCount", "K must be at least 1");
  if (static_cast<Index>(model.experts.size()) != model.K)
    add("ExpertCountMismatch", "expected K = " + std::to_string(model.K) + " experts, found " +
                                   std::to_string(model.experts.size()));
  if (static_cast<Index>(model.pi.size()) != model.K) {
    add("PiLengthMismatch", "pi must have K entries");
  } else if (!model.pi.empty()) {
    bool finite = true;
    for (double v : model.pi) {
      if (!std::isfinite(v)) finite = false;
    }
    if (!finite || std::any_of(model.pi.begin(), model.pi.end(), [](double v) { return v < 0.0; }))
      add("PiNegative", "pi entries must be finite and nonnegative");
    const double total = std::accumulate(model.pi.begin(), model.pi.end(), 0.0);
    if (!finite || std::abs(total - 1.0) > kProbabilityTolerance)
      add("PiNotNormalized", "pi sums to " + std::to_string(total));
  }

  const Index input = model.d * model.p;
  for (std::size_t k = 0; k < model.experts.size(); ++k) {
    const auto& e = model.experts[k];
    if (e.f.input_width() != input || e.f.output_width() != model.d)
      add("AutoregressiveShape", "expert " + std::to_string(k + 1) + " network must map R^(d*p) to R^d");
    check_volatility(e.g, input, k, report);
  }

  switch (model.innovation.family) {
    case InnovationSpec::Family::TwoPointHalf:
      add("InnovationNotCentered", "two-point innovations are not zero-mean");
      break;
    case InnovationSpec::Family::ScaledGaussian:
      if (!(model.innovation.sigma > 0.0) || !std::isfinite(model.innovation.sigma))
        add("InnovationScale", "sigma must be positive");
      break;
    case InnovationSpec::Family::StandardGaussian: break;
  }
  return report;
}

std::vector<double> normalize_probabilities(std::vector<double> pi) {
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  if (!(total > 0.0) || std::any_of(pi.begin(), pi.end(), [](double v) { return !(v >= 0.0); }))
    throw Error(ErrorCode::DomainError, "cannot normalize: entries must be nonnegative with positive sum");
  for (double& v : pi) v /= total;
  return pi;
}

double loss_value(const LossSpec& loss, const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const Vector>& fitted, double vol) {
  if (x.size() != fitted.size()) throw Error(ErrorCode::ShapeMismatch, "x and fitted differ in length");
  const double sq = (x - fitted).squaredNorm();
  if (loss.kind == LossSpec::Kind::Quadratic) return sq;
  if (!(std::abs(vol) >= loss.floor))
    throw Error(ErrorCode::DomainError, "volatility " + std::to_string(vol) + " is below the floor");
  if (sq == 0.0) return 0.0;
  const double norm = std::sqrt(sq);
  return std::pow(norm / std::abs(vol), loss.gamma);
}

ValidationReport validate_loss(const CharmeModel& model, const LossSpec& loss) {
  ValidationReport report;
  if (!(loss.gamma > 0.0)) report.violations.push_back({"LossExponent", "gamma must be positive"});
  if (loss.kind == LossSpec::Kind::Quadratic) {
    if (loss.gamma != 2.0) report.violations.push_back({"LossExponent", "quadratic loss has gamma = 2"});
    return report;
  }
  if (!(loss.floor > 0.0)) report.violations.push_back({"LossFloor", "normalized loss needs a positive floor"});
  for (std::size_t k = 0; k < model.experts.size(); ++k) {
    const auto& g = model.experts[k].g;
    const bool ok = g.is_constant() ? loss.floor <= 1.0 : g.floor >= loss.floor;
    if (!ok)
      report.violations.push_back(
          {"LossFloor", "expert " + std::to_string(k + 1) + " volatility can fall below the loss floor"});
  }
  return report;
}

}  // namespace charme
