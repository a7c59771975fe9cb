#include <algorithm>
#include <cmath>

#include "audiodiff/evalkit.hpp"

namespace audiodiff::evalkit {

using grad::Graph;
using grad::Mat;
using grad::VarId;
using model::Caption;

namespace {

// Last-row logits for a prefix, no gradient recording.
Mat<float> prefix_logits(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                         const Mat<float>& z, const Caption& prefix) {
  Graph<float> g(false);
  const auto bound = model::bind_params(g, params, cfg);
  const VarId logits = model::decode_teacher_forced(g, bound, g.constant(z), prefix);
  const Mat<float>& all = g.val(logits);
  Mat<float> last(1, all.cols);
  std::copy(all.row(all.rows - 1), all.row(all.rows - 1) + all.cols, last.v.data());
  return last;
}

int argmax_lowest_id(const Mat<float>& row) {
  int best = 0;
  for (int j = 1; j < row.cols; ++j)
    if (row.v[static_cast<size_t>(j)] > row.v[static_cast<size_t>(best)]) best = j;
  return best;
}

std::vector<double> log_softmax(const Mat<float>& row) {
  double mx = row.v[0];
  for (float v : row.v) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (float v : row.v) z += std::exp(static_cast<double>(v) - mx);
  const double logz = std::log(z);
  std::vector<double> out(row.v.size());
  for (size_t j = 0; j < row.v.size(); ++j)
    out[j] = static_cast<double>(row.v[j]) - mx - logz;
  return out;
}

}  // namespace

Caption greedy_decode(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                      const Mat<float>& z, const DecodingConfig& dcfg) {
  Caption out = {dcfg.bos_id};
  for (int step = 0; step < dcfg.max_len; ++step) {
    const Mat<float> logits = prefix_logits(params, cfg, z, out);
    const int token = argmax_lowest_id(logits);
    out.push_back(token);
    if (token == dcfg.eos_id) break;
  }
  return out;
}

BeamResult beam_decode(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                       const Mat<float>& z, const DecodingConfig& dcfg) {
  if (dcfg.beam_width < 1) throw std::invalid_argument("beam_decode: beam width must be >= 1");
  struct Hyp {
    Caption tokens;
    double logp = 0.0;
    bool finished = false;
  };
  std::vector<Hyp> beams = {{{dcfg.bos_id}, 0.0, false}};

  for (int step = 0; step < dcfg.max_len; ++step) {
    bool all_finished = true;
    for (const auto& h : beams) all_finished = all_finished && h.finished;
    if (all_finished) break;

    std::vector<Hyp> candidates;
    for (const auto& h : beams) {
      if (h.finished) {
        candidates.push_back(h);
        continue;
      }
      const std::vector<double> lp = log_softmax(prefix_logits(params, cfg, z, h.tokens));
      for (int j = 0; j < static_cast<int>(lp.size()); ++j) {
        Hyp next = h;
        next.tokens.push_back(j);
        next.logp += lp[static_cast<size_t>(j)];
        next.finished = (j == dcfg.eos_id);
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
    if (candidates.size() > static_cast<size_t>(dcfg.beam_width))
      candidates.resize(static_cast<size_t>(dcfg.beam_width));
    beams = std::move(candidates);
  }

  const Hyp* best_finished = nullptr;
  const Hyp* best_any = nullptr;
  for (const auto& h : beams) {
    if (!best_any || h.logp > best_any->logp) best_any = &h;
    if (h.finished && (!best_finished || h.logp > best_finished->logp)) best_finished = &h;
  }
  BeamResult res;
  const Hyp* pick = best_finished ? best_finished : best_any;
  res.caption = pick->tokens;
  res.log_prob = pick->logp;
  res.finished = pick->finished;
  return res;
}

}  // namespace audiodiff::evalkit
