#pragma once

#include "test_support.hpp"

#include <charme/asymptotics.hpp>
#include <charme/csv.hpp>
#include <charme/mvn_tests.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace charme::testing {

inline const std::vector<std::string>& mvn_fixture_names() {
  static const std::vector<std::string> names{"mvn_n20_q2", "mvn_n60_q3_skewed", "mvn_n120_q4"};
  return names;
}

/// Largest deviations between the library and a frozen reference result.
struct FixtureDeviation {
  double stat = 0.0;
  double p_value = 0.0;
};

inline FixtureDeviation compare_mvn_fixture(const std::string& name) {
  const std::filesystem::path dir = CHARME_FIXTURE_DIR;
  const Matrix x = matrix_from_csv(parse_csv(read_file(dir / (name + ".csv"))));
  const auto ref = nlohmann::json::parse(read_file(dir / (name + "_expected.json")));
  FixtureDeviation dev;
  auto check = [&](const TestResult& got, const nlohmann::json& want) {
    dev.stat = std::max(dev.stat, std::abs(got.stat - want["stat"].get<double>()));
    dev.p_value = std::max(dev.p_value, std::abs(got.p_value - want["p_value"].get<double>()));
  };
  const MardiaResult m = mardia(x);
  check(m.skewness, ref["mardia_skewness"]);
  check(m.kurtosis, ref["mardia_kurtosis"]);
  check(henze_zirkler(x), ref["henze_zirkler"]);
  check(royston(x), ref["royston"]);
  for (Index j = 0; j < x.cols(); ++j) {
    const Vector col = x.col(j);
    check(shapiro_wilk({col.data(), static_cast<std::size_t>(col.size())}), ref["shapiro_wilk"][static_cast<std::size_t>(j)]);
  }
  return dev;
}

}  // namespace charme::testing
