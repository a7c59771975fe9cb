#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "audiodiff/evalkit.hpp"

namespace audiodiff::evalkit {

Tokens strip_special(const model::Caption& caption, const model::Vocabulary& vocab) {
  Tokens out;
  for (int id : caption) {
    if (vocab.is_special(id)) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

Tokens split_words(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double token_accuracy(const Tokens& candidate, const Tokens& reference) {
  const size_t longest = std::max(candidate.size(), reference.size());
  if (longest == 0) return 1.0;
  size_t hits = 0;
  for (size_t i = 0; i < std::min(candidate.size(), reference.size()); ++i)
    if (candidate[i] == reference[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(longest);
}

namespace {

using Counts = std::unordered_map<std::string, int>;

// n-grams encoded as words joined by an unprintable separator
Counts ngram_counts(const Tokens& tokens, int n) {
  Counts out;
  if (static_cast<int>(tokens.size()) < n) return out;
  for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + static_cast<size_t>(j)];
    }
    out[key]++;
  }
  return out;
}

void check_corpus(const std::vector<Tokens>& candidates,
                  const std::vector<std::vector<Tokens>>& references) {
  if (candidates.empty()) throw std::invalid_argument("metrics: empty corpus");
  if (candidates.size() != references.size())
    throw std::invalid_argument("metrics: candidate/reference count mismatch");
  for (const auto& refs : references)
    if (refs.empty()) throw std::invalid_argument("metrics: item without references");
}

}  // namespace

double bleu_n(const std::vector<Tokens>& candidates,
              const std::vector<std::vector<Tokens>>& references, int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("bleu: order must be in 1..4");
  check_corpus(candidates, references);

  long long cand_len = 0, ref_len = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const long long c = static_cast<long long>(candidates[i].size());
    cand_len += c;
    // closest reference length; ties toward the shorter
    long long best = static_cast<long long>(references[i][0].size());
    for (const auto& r : references[i]) {
      const long long rl = static_cast<long long>(r.size());
      if (std::llabs(rl - c) < std::llabs(best - c) || (std::llabs(rl - c) == std::llabs(best - c) && rl < best))
        best = rl;
    }
    ref_len += best;
  }
  if (cand_len == 0) return 0.0;

  double log_prec_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    long long matched = 0, total = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
      const Counts cand = ngram_counts(candidates[i], order);
      Counts best_ref;
      for (const auto& r : references[i]) {
        for (const auto& [g, cnt] : ngram_counts(r, order)) {
          auto it = best_ref.find(g);
          if (it == best_ref.end())
            best_ref[g] = cnt;
          else
            it->second = std::max(it->second, cnt);
        }
      }
      for (const auto& [g, cnt] : cand) {
        total += cnt;
        auto it = best_ref.find(g);
        if (it != best_ref.end()) matched += std::min(cnt, it->second);
      }
    }
    if (total == 0) continue;  // no n-grams at this order anywhere: vacuously perfect
    if (matched == 0) return 0.0;
    log_prec_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / cand_len));
  return bp * std::exp(log_prec_sum / n);
}

double rouge_l_single(const Tokens& candidate, const std::vector<Tokens>& refs) {
  constexpr double beta = 1.2;
  double best = 0.0;
  for (const auto& ref : refs) {
    if (candidate.empty() || ref.empty()) continue;
    const size_t m = candidate.size(), n = ref.size();
    std::vector<size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
      for (size_t j = 1; j <= n; ++j) {
        if (candidate[i - 1] == ref[j - 1])
          cur[j] = prev[j - 1] + 1;
        else
          cur[j] = std::max(prev[j], cur[j - 1]);
      }
      std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[n]);
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(m);
    const double r = lcs / static_cast<double>(n);
    best = std::max(best, (1.0 + beta * beta) * r * p / (r + beta * beta * p));
  }
  return best;
}

double rouge_l(const std::vector<Tokens>& candidates,
               const std::vector<std::vector<Tokens>>& references) {
  check_corpus(candidates, references);
  double total = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i)
    total += rouge_l_single(candidates[i], references[i]);
  return total / static_cast<double>(candidates.size());
}

namespace {

struct TfIdfVec {
  std::unordered_map<std::string, double> w;
  double norm = 0.0;
  bool empty = true;
};

TfIdfVec tfidf(const Counts& counts, const std::unordered_map<std::string, double>& idf) {
  TfIdfVec v;
  double norm2 = 0.0;
  for (const auto& [g, cnt] : counts) {
    auto it = idf.find(g);
    const double weight = static_cast<double>(cnt) * (it == idf.end() ? 0.0 : it->second);
    v.w[g] = weight;
    norm2 += weight * weight;
    v.empty = false;
  }
  v.norm = std::sqrt(norm2);
  return v;
}

}  // namespace

double cider_d(const std::vector<Tokens>& candidates,
               const std::vector<std::vector<Tokens>>& references) {
  check_corpus(candidates, references);
  const size_t n_items = candidates.size();
  if (n_items < 2) throw std::invalid_argument("cider: corpus must have at least 2 items");
  constexpr int kOrders = 4;
  constexpr double kSigma = 6.0;

  // document frequency over the reference corpus, then idf = log(N / df)
  std::vector<std::unordered_map<std::string, double>> idf(kOrders);
  for (int o = 0; o < kOrders; ++o) {
    std::unordered_map<std::string, int> df;
    for (const auto& refs : references) {
      Counts in_item;
      for (const auto& r : refs)
        for (const auto& [g, cnt] : ngram_counts(r, o + 1)) in_item[g] += cnt;
      for (const auto& [g, cnt] : in_item) df[g]++;
    }
    for (const auto& [g, d] : df)
      idf[static_cast<size_t>(o)][g] =
          std::log(static_cast<double>(n_items) / std::max(1, d));
  }

  double corpus_score = 0.0;
  for (size_t i = 0; i < n_items; ++i) {
    double item_score = 0.0;
    for (const auto& ref : references[i]) {
      const double delta = static_cast<double>(candidates[i].size()) - static_cast<double>(ref.size());
      const double penalty = std::exp(-delta * delta / (2.0 * kSigma * kSigma));
      double order_sum = 0.0;
      for (int o = 0; o < kOrders; ++o) {
        const TfIdfVec vc = tfidf(ngram_counts(candidates[i], o + 1), idf[static_cast<size_t>(o)]);
        const TfIdfVec vr = tfidf(ngram_counts(ref, o + 1), idf[static_cast<size_t>(o)]);
        if (vc.empty && vr.empty) {
          // both sides have no n-grams of this order: they agree
          order_sum += penalty;
          continue;
        }
        if (vc.norm == 0.0 || vr.norm == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, wc] : vc.w) {
          auto it = vr.w.find(g);
          if (it != vr.w.end()) dot += std::min(wc, it->second) * it->second;
        }
        order_sum += penalty * dot / (vc.norm * vr.norm);
      }
      item_score += order_sum / kOrders;
    }
    corpus_score += 10.0 * item_score / static_cast<double>(references[i].size());
  }
  return corpus_score / static_cast<double>(n_items);
}

}  // namespace audiodiff::evalkit
