#include "crt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "crt/errors.hpp"

namespace crt {

namespace {

constexpr std::size_t kMaxOrder = 4;

using NgramCounts = std::map<Words, std::size_t>;

NgramCounts ngrams(const Words& words, std::size_t n) {
  NgramCounts out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++out[Words(words.begin() + static_cast<std::ptrdiff_t>(i),
                words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

void check_pair(const EvalPair& p) {
  const bool ok = std::any_of(p.references.begin(), p.references.end(),
                              [](const Words& r) { return !r.empty(); });
  if (!ok) throw ValidationError("sample '" + p.id + "' has no non-empty reference");
}

struct BleuStats {
  std::array<std::size_t, kMaxOrder> matches{};
  std::array<std::size_t, kMaxOrder> totals{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

void add_bleu_stats(const EvalPair& p, BleuStats& s) {
  check_pair(p);
  const std::size_t c = p.candidate.size();
  s.candidate_length += c;
  // Closest reference length; ties resolve to the shorter one.
  std::size_t best = p.references.front().size();
  for (const auto& r : p.references) {
    const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  s.reference_length += best;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const NgramCounts cand = ngrams(p.candidate, n);
    NgramCounts max_ref;
    for (const auto& r : p.references)
      for (const auto& [g, cnt] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
    for (const auto& [g, cnt] : cand) {
      auto it = max_ref.find(g);
      if (it != max_ref.end()) s.matches[n - 1] += std::min(cnt, it->second);
    }
    s.totals[n - 1] += c >= n ? c - n + 1 : 0;
  }
}

double bleu_from_stats(const BleuStats& s) {
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (s.totals[n] == 0 || s.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
  }
  const double c = static_cast<double>(s.candidate_length);
  const double r = static_cast<double>(s.reference_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

// Mean of values reduced in ascending id order.
double mean_by_id(std::span<const EvalPair> pairs, const std::vector<double>& values) {
  if (pairs.empty()) return 0.0;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].id < pairs[b].id; });
  double total = 0.0;
  for (auto i : order) total += values[i];
  return total / static_cast<double>(pairs.size());
}

}  // namespace

double bleu4(std::span<const EvalPair> pairs) {
  BleuStats s;
  for (const auto& p : pairs) add_bleu_stats(p, s);
  return bleu_from_stats(s);
}

double sentence_bleu4(const EvalPair& pair) {
  BleuStats s;
  add_bleu_stats(pair, s);
  return bleu_from_stats(s);
}

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_sample(const EvalPair& pair) {
  check_pair(pair);
  if (pair.candidate.empty()) return 0.0;
  double best = 0.0;
  const double beta2 = kRougeBeta * kRougeBeta;
  for (const auto& r : pair.references) {
    if (r.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(pair.candidate, r));
    if (lcs == 0.0) continue;
    const double prec = lcs / static_cast<double>(pair.candidate.size());
    const double rec = lcs / static_cast<double>(r.size());
    best = std::max(best, (1.0 + beta2) * prec * rec / (rec + beta2 * prec));
  }
  return best;
}

double rouge_l(std::span<const EvalPair> pairs) {
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) scores.push_back(rouge_l_sample(p));
  return mean_by_id(pairs, scores);
}

double cider_length_penalty(double delta) {
  return std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
}

namespace {

struct TfIdf {
  std::array<std::map<Words, double>, kMaxOrder> vec;
  std::array<double, kMaxOrder> norm{};
  double length = 0.0;
};

TfIdf tf_idf(const Words& words, const std::array<std::map<Words, std::size_t>, kMaxOrder>& df,
             double log_docs) {
  TfIdf out;
  out.length = static_cast<double>(words.size());
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    for (const auto& [g, tf] : ngrams(words, n)) {
      auto it = df[n - 1].find(g);
      const double doc_freq = it == df[n - 1].end() ? 0.0 : static_cast<double>(it->second);
      const double w = static_cast<double>(tf) * (log_docs - std::log(std::max(1.0, doc_freq)));
      out.vec[n - 1][g] = w;
      out.norm[n - 1] += w * w;
    }
    out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
  }
  return out;
}

std::array<double, kMaxOrder> cider_similarity(const TfIdf& hyp, const TfIdf& ref) {
  std::array<double, kMaxOrder> val{};
  const double penalty = cider_length_penalty(hyp.length - ref.length);
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    for (const auto& [g, h] : hyp.vec[n]) {
      auto it = ref.vec[n].find(g);
      if (it != ref.vec[n].end()) val[n] += std::min(h, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val[n] /= hyp.norm[n] * ref.norm[n];
    val[n] *= penalty;
  }
  return val;
}

}  // namespace

std::vector<double> cider_d_scores(std::span<const EvalPair> pairs, std::string* warning) {
  for (const auto& p : pairs) check_pair(p);
  std::array<std::map<Words, std::size_t>, kMaxOrder> df;
  for (const auto& p : pairs) {
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      std::set<Words> seen;
      for (const auto& r : p.references)
        for (const auto& [g, cnt] : ngrams(r, n)) seen.insert(g);
      for (const auto& g : seen) ++df[n - 1][g];
    }
  }
  if (pairs.size() < 2 && warning) {
    *warning = "CIDEr-D over a single sample: idf is degenerate and scores are zero";
  }
  const double log_docs = std::log(static_cast<double>(std::max<std::size_t>(pairs.size(), 1)));
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    const TfIdf hyp = tf_idf(p.candidate, df, log_docs);
    std::array<double, kMaxOrder> acc{};
    for (const auto& r : p.references) {
      const auto sim = cider_similarity(hyp, tf_idf(r, df, log_docs));
      for (std::size_t n = 0; n < kMaxOrder; ++n) acc[n] += sim[n];
    }
    double mean = 0.0;
    for (double v : acc) mean += v;
    mean /= static_cast<double>(kMaxOrder);
    scores.push_back(10.0 * mean / static_cast<double>(p.references.size()));
  }
  return scores;
}

double cider_d(std::span<const EvalPair> pairs, std::string* warning) {
  return mean_by_id(pairs, cider_d_scores(pairs, warning));
}

std::string MetricReport::to_json() const {
  nlohmann::json samples_json = nlohmann::json::array();
  for (const auto& s : samples) {
    samples_json.push_back(
        {{"id", s.id}, {"bleu4", s.bleu4}, {"rouge_l", s.rouge_l}, {"cider_d", s.cider_d}});
  }
  nlohmann::json doc{{"corpus", {{"bleu4", bleu4}, {"rouge_l", rouge_l}, {"cider_d", cider_d}}},
                     {"samples", samples_json}};
  return doc.dump(2) + "\n";
}

MetricReport evaluate_corpus(const std::map<std::string, Words>& candidates,
                             const std::map<std::string, std::vector<Words>>& references) {
  std::vector<std::string> unmatched;
  for (const auto& [id, c] : candidates)
    if (!references.contains(id)) unmatched.push_back(id);
  for (const auto& [id, r] : references)
    if (!candidates.contains(id)) unmatched.push_back(id);
  if (!unmatched.empty()) {
    std::string msg = "unmatched sample ids:";
    for (const auto& id : unmatched) msg += " " + id;
    throw AlignmentError(msg);
  }
  std::vector<EvalPair> pairs;
  pairs.reserve(candidates.size());
  for (const auto& [id, c] : candidates) pairs.push_back({id, c, references.at(id)});

  MetricReport report;
  std::string warning;
  const auto cider = cider_d_scores(pairs, &warning);
  if (!warning.empty()) report.warnings.push_back(warning);
  report.bleu4 = bleu4(pairs);
  report.rouge_l = rouge_l(pairs);
  report.cider_d = mean_by_id(pairs, cider);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    report.samples.push_back(
        {pairs[i].id, sentence_bleu4(pairs[i]), rouge_l_sample(pairs[i]), cider[i]});
  }
  return report;
}

}  // namespace crt
