#include "distillkit/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <stdexcept>

namespace dk {

namespace {

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::vector<std::string>, int> counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return counts;
}

}  // namespace

RougeScore rouge_n(std::string_view hypothesis, std::string_view reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be at least 1");
  const auto hyp = split_whitespace(hypothesis);
  const auto ref = split_whitespace(reference);
  const auto hyp_counts = ngram_counts(hyp, n);
  const auto ref_counts = ngram_counts(ref, n);

  int overlap = 0;
  for (const auto& [gram, count] : hyp_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) overlap += std::min(count, it->second);
  }
  const auto hyp_total = static_cast<double>(hyp.size() >= static_cast<std::size_t>(n) ? hyp.size() - n + 1 : 0);
  const auto ref_total = static_cast<double>(ref.size() >= static_cast<std::size_t>(n) ? ref.size() - n + 1 : 0);

  RougeScore s;
  s.recall_undefined = ref_total == 0.0;
  s.precision = hyp_total > 0.0 ? overlap / hyp_total : 0.0;
  s.recall = ref_total > 0.0 ? overlap / ref_total : 0.0;
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

RougeScore rouge_l(std::string_view hypothesis, std::string_view reference) {
  const auto hyp = split_whitespace(hypothesis);
  const auto ref = split_whitespace(reference);
  RougeScore s;
  s.recall_undefined = ref.empty();
  if (hyp.empty() || ref.empty()) return s;

  std::vector<int> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      cur[j] = hyp[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = prev[ref.size()];
  s.precision = lcs / static_cast<double>(hyp.size());
  s.recall = lcs / static_cast<double>(ref.size());
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

RougeReport score_texts(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("score_texts: length mismatch");
  RougeReport report;
  report.n_examples = hypotheses.size();
  if (hypotheses.empty()) return report;
  auto add = [](RougeScore& total, const RougeScore& s) {
    total.precision += s.precision;
    total.recall += s.recall;
    total.f1 += s.f1;
    total.recall_undefined = total.recall_undefined || s.recall_undefined;
  };
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    add(report.rouge1, rouge_n(hypotheses[i], references[i], 1));
    add(report.rouge2, rouge_n(hypotheses[i], references[i], 2));
    add(report.rougeL, rouge_l(hypotheses[i], references[i]));
  }
  const double n = static_cast<double>(hypotheses.size());
  for (RougeScore* s : {&report.rouge1, &report.rouge2, &report.rougeL}) {
    s->precision /= n;
    s->recall /= n;
    s->f1 /= n;
  }
  return report;
}

std::string RougeReport::to_record() const {
  nlohmann::ordered_json j;
  j["rouge1"] = rouge1.f1;
  j["rouge2"] = rouge2.f1;
  j["rougeL"] = rougeL.f1;
  j["n_examples"] = n_examples;
  return j.dump();
}

}  // namespace dk
