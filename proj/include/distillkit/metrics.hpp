#pragma once

#include "distillkit/corpus.hpp"
#include "distillkit/seq2seq.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dk {

/// Precision, recall and F1 of one ROUGE variant.
struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Set when the reference has fewer than n tokens, so recall has no
  /// denominator; recall is then reported as 0.
  bool recall_undefined = false;
};

/// Clipped n-gram overlap over whitespace tokens, case preserved.
RougeScore rouge_n(std::string_view hypothesis, std::string_view reference, int n);

/// Sentence-level longest-common-subsequence ROUGE over whitespace tokens.
RougeScore rouge_l(std::string_view hypothesis, std::string_view reference);

/// Corpus ROUGE: unweighted mean of per-example precision, recall and F1.
struct RougeReport {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;
  std::size_t n_examples = 0;

  /// Single-line JSON record {"rouge1":..,"rouge2":..,"rougeL":..,"n_examples":..}
  /// carrying F1 values.
  std::string to_record() const;
};

RougeReport score_texts(std::span<const std::string> hypotheses, std::span<const std::string> references);

/// Beam-decodes every source and scores it against the gold target.
template <typename Scalar>
RougeReport score_corpus(const Seq2SeqModel<Scalar>& model, const PairDataset& data, const BeamParams& beam) {
  if (!data.vocab) throw std::invalid_argument("score_corpus: dataset has no vocabulary");
  std::vector<std::string> hyps, refs;
  hyps.reserve(data.size());
  refs.reserve(data.size());
  for (const auto& r : data.records) {
    hyps.push_back(data.vocab->decode(beam_search(model, r.source, beam)));
    refs.push_back(data.vocab->decode(r.target));
  }
  return score_texts(hyps, refs);
}

}  // namespace dk
