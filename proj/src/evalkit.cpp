#include "audiodiff/evalkit.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "audiodiff/scenegen.hpp"
#include "audiodiff/util.hpp"

namespace audiodiff::evalkit {

using grad::Graph;
using grad::Mat;
using grad::VarId;
using json = nlohmann::ordered_json;

namespace {

model::Caption decode_any(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                          const Mat<float>& z, const DecodingConfig& dcfg) {
  if (dcfg.strategy == DecodingConfig::Strategy::beam)
    return beam_decode(params, cfg, z, dcfg).caption;
  return greedy_decode(params, cfg, z, dcfg);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

MetricReport evaluate(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                      const difflearn::Corpus& corpus, const DecodingConfig& dcfg) {
  if (corpus.test.empty()) throw std::invalid_argument("evaluate: empty test split");

  MetricReport report;
  std::vector<Tokens> candidates;
  std::vector<std::vector<Tokens>> references;
  for (const auto& item : corpus.test) {
    Mat<float> z;
    {
      Graph<float> g(false);
      const auto bound = model::bind_params(g, params, cfg);
      z = g.val(model::encode(g, bound, model::mel_to_mat<float>(item.mel)));
    }
    const model::Caption decoded = decode_any(params, cfg, z, dcfg);
    const Tokens cand = strip_special(decoded, corpus.vocab);
    const Tokens ref = split_words(item.caption_text);

    ItemScore s;
    s.id = item.id;
    s.generated = model::detokenize(decoded, corpus.vocab);
    s.target = item.caption_text;
    s.token_acc = token_accuracy(cand, ref);
    s.rouge = rouge_l_single(cand, {ref});
    report.items.push_back(std::move(s));

    candidates.push_back(cand);
    references.push_back({ref});
  }

  for (int n = 1; n <= 4; ++n) report.bleu[n - 1] = bleu_n(candidates, references, n);
  report.rouge = rouge_l(candidates, references);
  report.cider = candidates.size() >= 2 ? cider_d(candidates, references) : 0.0;
  report.count = candidates.size();
  double acc = 0.0;
  for (const auto& s : report.items) acc += s.token_acc;
  report.mean_token_acc = acc / static_cast<double>(report.items.size());
  return report;
}

std::string MetricReport::to_json() const {
  json j;
  j["count"] = count;
  j["bleu_1"] = bleu[0];
  j["bleu_2"] = bleu[1];
  j["bleu_3"] = bleu[2];
  j["bleu_4"] = bleu[3];
  j["rouge_l"] = rouge;
  j["cider_d"] = cider;
  j["token_accuracy"] = mean_token_acc;
  json items_json = json::array();
  for (const auto& s : items) {
    json item;
    item["id"] = s.id;
    item["generated"] = s.generated;
    item["target"] = s.target;
    item["token_accuracy"] = s.token_acc;
    item["rouge_l"] = s.rouge;
    items_json.push_back(std::move(item));
  }
  j["items"] = std::move(items_json);
  return j.dump(2) + "\n";
}

std::string MetricReport::to_table() const {
  std::string out;
  out += "metric      value\n";
  out += "----------  ------\n";
  out += "bleu_1      " + fmt(bleu[0]) + "\n";
  out += "bleu_2      " + fmt(bleu[1]) + "\n";
  out += "bleu_3      " + fmt(bleu[2]) + "\n";
  out += "bleu_4      " + fmt(bleu[3]) + "\n";
  out += "rouge_l     " + fmt(rouge) + "\n";
  out += "cider_d     " + fmt(cider) + "\n";
  out += "token_acc   " + fmt(mean_token_acc) + "\n";
  out += "items       " + std::to_string(count) + "\n";
  return out;
}

ProbeReport difference_probe(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                             const difflearn::Corpus& corpus, const DecodingConfig& dcfg,
                             uint64_t seed) {
  if (corpus.test.empty()) throw std::invalid_argument("probe: empty test split");
  if (corpus.bank.empty()) throw std::invalid_argument("probe: empty reference bank");

  ProbeReport report;
  report.cases[0].label = "input";
  report.cases[1].label = "mixed";
  report.cases[2].label = "mixed_minus_reference";
  report.cases[3].label = "mixed_minus_input";

  for (size_t idx = 0; idx < corpus.test.size(); ++idx) {
    const auto& item = corpus.test[idx];
    util::Rng rng(util::derive_seed(seed, "probe", idx));
    std::vector<const difflearn::BankEntry*> admissible;
    for (const auto& b : corpus.bank) {
      bool clash = false;
      for (auto t : item.types) clash = clash || t == b.type;
      if (!clash) admissible.push_back(&b);
    }
    if (admissible.empty())
      throw std::invalid_argument("probe: no admissible reference for " + item.id);
    const difflearn::BankEntry& ref = *admissible[static_cast<size_t>(rng.next_below(admissible.size()))];

    const dsp::Waveform x = difflearn::fetch_wave(item, corpus);
    const dsp::MixResult mixed = dsp::mix_same_power(x, ref.wave);
    const dsp::MelSpectrogram mel_mixed = dsp::mel_spectrogram(mixed.mixed, corpus.mel_cfg);

    Mat<float> z_input, z_mixed, z_ref;
    {
      Graph<float> g(false);
      const auto bound = model::bind_params(g, params, cfg);
      z_input = g.val(model::encode(g, bound, model::mel_to_mat<float>(item.mel)));
      z_mixed = g.val(model::encode(g, bound, model::mel_to_mat<float>(mel_mixed)));
      z_ref = g.val(model::encode(g, bound, model::mel_to_mat<float>(ref.mel)));
    }
    auto subtract = [](const Mat<float>& a, const Mat<float>& b) {
      Mat<float> out(a.rows, a.cols);
      for (size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
      return out;
    };

    const Tokens ref_noun = split_words(scenegen::phrase_of(ref.type).noun);
    auto run_case = [&](int case_idx, const Mat<float>& z, const std::string& target_text) {
      const model::Caption decoded = decode_any(params, cfg, z, dcfg);
      const Tokens cand = strip_special(decoded, corpus.vocab);
      ProbeItem pi;
      pi.id = item.id;
      pi.reference_id = ref.id;
      pi.generated = model::detokenize(decoded, corpus.vocab);
      pi.target = target_text;
      pi.token_acc = token_accuracy(cand, split_words(target_text));
      pi.mentions_reference = false;
      if (!ref_noun.empty() && cand.size() >= ref_noun.size()) {
        for (size_t i = 0; i + ref_noun.size() <= cand.size() && !pi.mentions_reference; ++i) {
          bool all = true;
          for (size_t j = 0; j < ref_noun.size(); ++j) all = all && cand[i + j] == ref_noun[j];
          pi.mentions_reference = all;
        }
      }
      report.cases[case_idx].items.push_back(std::move(pi));
    };

    run_case(0, z_input, item.caption_text);
    run_case(1, z_mixed, item.caption_text);
    run_case(2, subtract(z_mixed, z_ref), item.caption_text);
    run_case(3, subtract(z_mixed, z_input), ref.caption_text);
  }

  report.count = corpus.test.size();
  for (auto& c : report.cases) {
    double acc = 0.0;
    int mentions = 0;
    std::vector<Tokens> cands;
    std::vector<std::vector<Tokens>> refs;
    for (const auto& pi : c.items) {
      acc += pi.token_acc;
      mentions += pi.mentions_reference ? 1 : 0;
      cands.push_back(split_words(pi.generated));
      refs.push_back({split_words(pi.target)});
    }
    c.mean_token_acc = acc / static_cast<double>(c.items.size());
    c.mention_rate = static_cast<double>(mentions) / static_cast<double>(c.items.size());
    c.cider = cands.size() >= 2 ? cider_d(cands, refs) : 0.0;
  }
  return report;
}

std::string ProbeReport::to_json() const {
  json j;
  j["count"] = count;
  json case_array = json::array();
  for (const auto& c : cases) {
    json cj;
    cj["label"] = c.label;
    cj["token_accuracy"] = c.mean_token_acc;
    cj["cider_d"] = c.cider;
    cj["mention_rate"] = c.mention_rate;
    json items_json = json::array();
    for (const auto& pi : c.items) {
      json item;
      item["id"] = pi.id;
      item["reference_id"] = pi.reference_id;
      item["generated"] = pi.generated;
      item["target"] = pi.target;
      item["token_accuracy"] = pi.token_acc;
      item["mentions_reference"] = pi.mentions_reference;
      items_json.push_back(std::move(item));
    }
    cj["items"] = std::move(items_json);
    case_array.push_back(std::move(cj));
  }
  j["cases"] = std::move(case_array);
  return j.dump(2) + "\n";
}

std::string ProbeReport::to_table() const {
  std::string out;
  out += "case                        token_acc  cider_d  mention_rate\n";
  out += "--------------------------  ---------  -------  ------------\n";
  for (const auto& c : cases) {
    std::string label = c.label;
    label.resize(26, ' ');
    out += label + "  " + fmt(c.mean_token_acc) + "     " + fmt(c.cider) + "   " +
           fmt(c.mention_rate) + "\n";
  }
  out += "items per case: " + std::to_string(count) + "\n";
  return out;
}

}  // namespace audiodiff::evalkit
