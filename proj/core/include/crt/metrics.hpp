#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace crt {

using Words = std::vector<std::string>;

struct EvalPair {
  std::string id;
  Words candidate;
  std::vector<Words> references;  // at least one non-empty
};

inline constexpr double kRougeBeta = 1.2;
inline constexpr double kCiderSigma = 6.0;

// Corpus BLEU-4: clipped n-gram precisions for n = 1..4 summed over the
// corpus, geometric mean, brevity penalty against the closest reference
// length. No smoothing: any zero precision gives 0.
double bleu4(std::span<const EvalPair> pairs);
double sentence_bleu4(const EvalPair& pair);

// LCS F-measure with β = 1.2, best reference per sample, corpus mean.
double rouge_l(std::span<const EvalPair> pairs);
double rouge_l_sample(const EvalPair& pair);
std::size_t lcs_length(const Words& a, const Words& b);

// exp(−δ²/(2σ²)) with σ = 6
double cider_length_penalty(double delta);

// CIDEr-D per sample (0..10). Document frequencies come from each sample's
// reference set. A single-sample corpus has degenerate idf; `warning`
// receives a message in that case.
std::vector<double> cider_d_scores(std::span<const EvalPair> pairs, std::string* warning = nullptr);
double cider_d(std::span<const EvalPair> pairs, std::string* warning = nullptr);

struct SampleScore {
  std::string id;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
};

struct MetricReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  std::vector<SampleScore> samples;  // sorted by id
  std::vector<std::string> warnings;

  // {"corpus": {...}, "samples": [...]}; raw (unscaled) values.
  std::string to_json() const;
};

// Candidates and references keyed by sample id. Throws AlignmentError
// listing ids present on only one side.
MetricReport evaluate_corpus(const std::map<std::string, Words>& candidates,
                             const std::map<std::string, std::vector<Words>>& references);

}  // namespace crt
