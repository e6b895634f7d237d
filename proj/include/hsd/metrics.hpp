#pragma once

#include <hsd/math.hpp>

#include <json.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hsd {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Prf1 {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  Confusion counts;
  /// Zero-denominator notes ("precision undefined", ...).
  std::vector<std::string> warnings;
};

/// Positive class is hate (1). Throws InvalidArgument on a length mismatch.
Prf1 prf1(std::span<const int> predictions, std::span<const int> gold);
/// 2PR/(P+R), or 0 when P+R is 0.
double f1_score(double precision, double recall);
/// 100 * (f1_new - f1_base) / f1_base; throws InvalidArgument when f1_base <= 0.
double relative_improvement(double f1_new, double f1_base);

struct McNemar {
  std::size_t b = 0;  // a correct, b wrong
  std::size_t c = 0;  // a wrong, b correct
  double chi2 = 0;
  double p_value = 1;
};

/// Continuity-corrected test; throws Undefined when there are no discordant pairs.
McNemar mcnemar(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> gold);
McNemar mcnemar_counts(std::size_t b, std::size_t c);

/// Regularized upper incomplete gamma Q(a, x), series below a+1 and a
/// continued fraction above, both truncated at relative 1e-12.
double gamma_q(double a, double x);
/// Upper tail of the chi-squared distribution with one degree of freedom.
double chi2_sf_1dof(double chi2);

struct ModelScore {
  std::string name;
  Prf1 scores;
};

struct PairTest {
  std::string a, b;
  std::optional<McNemar> result;  // empty when undefined
};

struct MetricsReport {
  std::vector<ModelScore> models;
  std::vector<PairTest> comparisons;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  std::string table() const;
  friend bool operator==(const MetricsReport& x, const MetricsReport& y);
};

/// Scores every named prediction set and runs McNemar on each pair in order.
MetricsReport build_report(const std::vector<std::pair<std::string, std::vector<int>>>& predictions,
                           std::span<const int> gold);

}  // namespace hsd
