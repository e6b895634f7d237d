#include <hsd/errors.hpp>
#include <hsd/metrics.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace hsd {

namespace {

constexpr double kGammaTol = 1e-12;
constexpr int kGammaMaxIter = 10000;

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::InvalidArgument,
                "length mismatch: " + std::to_string(a) + " predictions vs " + std::to_string(b) + " gold labels");
  }
}

// P(a, x) by its power series; valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < kGammaMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kGammaTol) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by Lentz's continued fraction; valid for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kGammaTol) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

nlohmann::ordered_json prf1_json(const Prf1& s) {
  nlohmann::ordered_json j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  j["tp"] = s.counts.tp;
  j["fp"] = s.counts.fp;
  j["fn"] = s.counts.fn;
  j["tn"] = s.counts.tn;
  j["warnings"] = s.warnings;
  return j;
}

Prf1 prf1_from_json(const nlohmann::json& j) {
  Prf1 s;
  s.precision = j.at("precision").get<double>();
  s.recall = j.at("recall").get<double>();
  s.f1 = j.at("f1").get<double>();
  s.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("fn").get<std::size_t>(),
              j.at("tn").get<std::size_t>()};
  s.warnings = j.value("warnings", std::vector<std::string>{});
  return s;
}

}  // namespace

Prf1 prf1(std::span<const int> predictions, std::span<const int> gold) {
  check_lengths(predictions.size(), gold.size());
  Prf1 s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predictions[i] == 1, g = gold[i] == 1;
    if (p && g) ++s.counts.tp;
    else if (p) ++s.counts.fp;
    else if (g) ++s.counts.fn;
    else ++s.counts.tn;
  }
  const std::size_t pred_pos = s.counts.tp + s.counts.fp, gold_pos = s.counts.tp + s.counts.fn;
  if (pred_pos == 0) s.warnings.push_back("precision undefined (no positive predictions), set to 0");
  else s.precision = static_cast<double>(s.counts.tp) / static_cast<double>(pred_pos);
  if (gold_pos == 0) s.warnings.push_back("recall undefined (no positive gold labels), set to 0");
  else s.recall = static_cast<double>(s.counts.tp) / static_cast<double>(gold_pos);
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

double f1_score(double precision, double recall) {
  const double sum = precision + recall;
  return sum > 0 ? 2.0 * precision * recall / sum : 0.0;
}

double relative_improvement(double f1_new, double f1_base) {
  if (!(f1_base > 0)) throw Error(ErrorCode::InvalidArgument, "base F1 must be positive");
  return 100.0 * (f1_new - f1_base) / f1_base;
}

double gamma_q(double a, double x) {
  if (!(a > 0) || x < 0) throw Error(ErrorCode::InvalidArgument, "gamma_q needs a > 0 and x >= 0");
  if (x == 0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi2_sf_1dof(double chi2) { return gamma_q(0.5, chi2 / 2.0); }

McNemar mcnemar_counts(std::size_t b, std::size_t c) {
  if (b + c == 0) throw Error(ErrorCode::Undefined, "McNemar undefined: no discordant pairs");
  McNemar m;
  m.b = b;
  m.c = c;
  const double diff = std::fabs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  m.chi2 = diff * diff / static_cast<double>(b + c);
  m.p_value = chi2_sf_1dof(m.chi2);
  return m;
}

McNemar mcnemar(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> gold) {
  check_lengths(preds_a.size(), gold.size());
  check_lengths(preds_b.size(), gold.size());
  std::size_t b = 0, c = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool ra = preds_a[i] == gold[i], rb = preds_b[i] == gold[i];
    if (ra && !rb) ++b;
    if (!ra && rb) ++c;
  }
  return mcnemar_counts(b, c);
}

MetricsReport build_report(const std::vector<std::pair<std::string, std::vector<int>>>& predictions,
                           std::span<const int> gold) {
  MetricsReport r;
  for (const auto& [name, preds] : predictions) r.models.push_back({name, prf1(preds, gold)});
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (std::size_t j = i + 1; j < predictions.size(); ++j) {
      PairTest t{predictions[i].first, predictions[j].first, std::nullopt};
      try {
        t.result = mcnemar(predictions[i].second, predictions[j].second, gold);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Undefined) throw;
      }
      r.comparisons.push_back(std::move(t));
    }
  }
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["models"] = nlohmann::ordered_json::array();
  for (const ModelScore& m : models) {
    nlohmann::ordered_json e;
    e["name"] = m.name;
    e.update(prf1_json(m.scores));
    j["models"].push_back(std::move(e));
  }
  j["mcnemar"] = nlohmann::ordered_json::array();
  for (const PairTest& t : comparisons) {
    nlohmann::ordered_json e;
    e["a"] = t.a;
    e["b"] = t.b;
    if (t.result) {
      e["b_count"] = t.result->b;
      e["c_count"] = t.result->c;
      e["chi2"] = t.result->chi2;
      e["p_value"] = t.result->p_value;
    } else {
      e["undefined"] = true;
    }
    j["mcnemar"].push_back(std::move(e));
  }
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  for (const auto& e : j.at("models")) r.models.push_back({e.at("name").get<std::string>(), prf1_from_json(e)});
  for (const auto& e : j.at("mcnemar")) {
    PairTest t{e.at("a").get<std::string>(), e.at("b").get<std::string>(), std::nullopt};
    if (!e.value("undefined", false)) {
      t.result = McNemar{e.at("b_count").get<std::size_t>(), e.at("c_count").get<std::size_t>(),
                         e.at("chi2").get<double>(), e.at("p_value").get<double>()};
    }
    r.comparisons.push_back(std::move(t));
  }
  return r;
}

std::string MetricsReport::table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %7s %7s %7s %6s %6s %6s %6s\n", "model", "prec", "rec", "f1", "tp", "fp",
                "fn", "tn");
  out << line;
  for (const ModelScore& m : models) {
    const Prf1& s = m.scores;
    std::snprintf(line, sizeof line, "%-24s %7.4f %7.4f %7.4f %6zu %6zu %6zu %6zu\n", m.name.c_str(), s.precision,
                  s.recall, s.f1, s.counts.tp, s.counts.fp, s.counts.fn, s.counts.tn);
    out << line;
  }
  if (!comparisons.empty()) out << "\nmcnemar\n";
  for (const PairTest& t : comparisons) {
    if (t.result) {
      std::snprintf(line, sizeof line, "%s vs %s: b=%zu c=%zu chi2=%.4f p=%.4g\n", t.a.c_str(), t.b.c_str(),
                    t.result->b, t.result->c, t.result->chi2, t.result->p_value);
    } else {
      std::snprintf(line, sizeof line, "%s vs %s: undefined (no discordant pairs)\n", t.a.c_str(), t.b.c_str());
    }
    out << line;
  }
  return out.str();
}

bool operator==(const MetricsReport& x, const MetricsReport& y) {
  if (x.models.size() != y.models.size() || x.comparisons.size() != y.comparisons.size()) return false;
  for (std::size_t i = 0; i < x.models.size(); ++i) {
    const Prf1 &a = x.models[i].scores, &b = y.models[i].scores;
    if (x.models[i].name != y.models[i].name || a.precision != b.precision || a.recall != b.recall || a.f1 != b.f1 ||
        !(a.counts == b.counts) || a.warnings != b.warnings) {
      return false;
    }
  }
  for (std::size_t i = 0; i < x.comparisons.size(); ++i) {
    const PairTest &a = x.comparisons[i], &b = y.comparisons[i];
    if (a.a != b.a || a.b != b.b || a.result.has_value() != b.result.has_value()) return false;
    if (a.result && (a.result->b != b.result->b || a.result->c != b.result->c || a.result->chi2 != b.result->chi2 ||
                     a.result->p_value != b.result->p_value)) {
      return false;
    }
  }
  return true;
}

}  // namespace hsd
