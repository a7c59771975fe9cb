#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audiodiff/difflearn.hpp"
#include "audiodiff/model.hpp"

namespace audiodiff::evalkit {

struct DecodingConfig {
  enum class Strategy { greedy, beam };
  Strategy strategy = Strategy::greedy;
  int beam_width = 4;
  int max_len = 24;  // generated tokens after <bos>, <eos> included
  int bos_id = 1;
  int eos_id = 2;
};

// Argmax decoding from <bos>; ties break toward the lowest token id.
model::Caption greedy_decode(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                             const grad::Mat<float>& z, const DecodingConfig& dcfg);

struct BeamResult {
  model::Caption caption;
  double log_prob = 0.0;
  bool finished = false;  // false: every beam hit max_len, best unfinished returned
};

// Sum-of-log-probabilities beam search, no length normalization.
BeamResult beam_decode(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                       const grad::Mat<float>& z, const DecodingConfig& dcfg);

// ---- caption metrics; tokens are whitespace words with specials stripped ----

using Tokens = std::vector<std::string>;

Tokens strip_special(const model::Caption& caption, const model::Vocabulary& vocab);
Tokens split_words(const std::string& text);

// Corpus-level modified n-gram precision with clipping, geometric mean over
// orders 1..n, times the brevity penalty exp(min(0, 1 - r/c)).
double bleu_n(const std::vector<Tokens>& candidates,
              const std::vector<std::vector<Tokens>>& references, int n);

// Mean over items of the max-over-references LCS F-measure with beta = 1.2.
double rouge_l(const std::vector<Tokens>& candidates,
               const std::vector<std::vector<Tokens>>& references);
double rouge_l_single(const Tokens& candidate, const std::vector<Tokens>& refs);

// CIDEr-D: TF-IDF n-gram cosine with clipping, orders 1..4 averaged, gaussian
// length penalty sigma = 6, scaled by 10.
double cider_d(const std::vector<Tokens>& candidates,
               const std::vector<std::vector<Tokens>>& references);

// Fraction of aligned positions that match, over the longer length.
double token_accuracy(const Tokens& candidate, const Tokens& reference);

struct ItemScore {
  std::string id;
  std::string generated;
  std::string target;
  double token_acc = 0.0;
  double rouge = 0.0;
};

struct MetricReport {
  double bleu[4] = {0, 0, 0, 0};
  double rouge = 0.0;
  double cider = 0.0;
  double mean_token_acc = 0.0;
  size_t count = 0;
  std::vector<ItemScore> items;

  std::string to_json() const;
  std::string to_table() const;
};

// Decodes every test scene unmixed (zero-reference path) and scores against
// the ground-truth captions.
MetricReport evaluate(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                      const difflearn::Corpus& corpus, const DecodingConfig& dcfg);

struct ProbeItem {
  std::string id;
  std::string reference_id;
  std::string generated;
  std::string target;
  double token_acc = 0.0;
  bool mentions_reference = false;  // reference noun phrase appears verbatim
};

struct ProbeCase {
  std::string label;
  std::vector<ProbeItem> items;
  double mean_token_acc = 0.0;
  double cider = 0.0;
  double mention_rate = 0.0;
};

// The four-way probe: (1) unmixed input, (2) mixed input, (3) mixed minus
// reference (target: scene caption), (4) mixed minus input (target: the
// reference event's caption).
struct ProbeReport {
  ProbeCase cases[4];
  size_t count = 0;

  std::string to_json() const;
  std::string to_table() const;
};

ProbeReport difference_probe(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                             const difflearn::Corpus& corpus, const DecodingConfig& dcfg,
                             uint64_t seed);

}  // namespace audiodiff::evalkit
