#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audiodiff/dsp.hpp"
#include "audiodiff/optim.hpp"
#include "audiodiff/tensor.hpp"

namespace audiodiff::model {

struct Vocabulary {
  std::vector<std::string> tokens;  // index == id
  int pad_id = 0;
  int bos_id = 1;
  int eos_id = 2;

  static Vocabulary from_words(const std::vector<std::string>& words);

  int size() const { return static_cast<int>(tokens.size()); }
  const std::string& token(int id) const;
  int id_of(const std::string& word) const;  // throws on unknown word
  bool is_special(int id) const { return id == pad_id || id == bos_id || id == eos_id; }
};

// Token-id sequence wrapped in <bos> ... <eos>.
using Caption = std::vector<int>;

Caption tokenize(const std::string& text, const Vocabulary& vocab);
std::string detokenize(const Caption& caption, const Vocabulary& vocab);

struct ModelConfig {
  int n_mels = 64;
  int d_model = 128;
  int n_heads = 4;
  int ff_mult = 2;
  int enc_layers = 2;
  int dec_layers = 2;
  int temporal_stride = 2;  // per conv block; two blocks total
  int vocab_size = 0;
  int l_max = 24;  // total caption tokens including <bos>/<eos>
  uint64_t init_seed = 1;

  int ff_dim() const { return d_model * ff_mult; }
  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

// Parameters in checkpoint order. Output projection starts at zero so the
// first-step loss is exactly ln|V|.
grad::ParamStore<float> init_params(const ModelConfig& cfg);

// ---- graph builders (templated so the fd harness can run them in double) ----

template <typename T>
struct BoundParams {
  const ModelConfig* cfg = nullptr;
  const grad::ParamStore<T>* store = nullptr;
  std::vector<grad::VarId> ids;

  grad::VarId operator[](const std::string& name) const {
    return ids[static_cast<size_t>(store->find(name))];
  }
};

// Creates one leaf per parameter; call once per graph so the input and
// reference branches share a single parameter set.
template <typename T>
BoundParams<T> bind_params(grad::Graph<T>& g, const grad::ParamStore<T>& params,
                           const ModelConfig& cfg) {
  BoundParams<T> bound;
  bound.cfg = &cfg;
  bound.store = &params;
  bound.ids.reserve(static_cast<size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i)
    bound.ids.push_back(g.leaf(params.value(i), true));
  return bound;
}

template <typename T>
grad::Mat<T> sinusoidal_positions(int len, int dim) {
  grad::Mat<T> pe(len, dim);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
      pe.at(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < dim) pe.at(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
grad::Mat<T> mel_to_mat(const dsp::MelSpectrogram& mel) {
  grad::Mat<T> m(mel.frames, mel.bins);
  for (size_t i = 0; i < mel.values.size(); ++i) m.v[i] = static_cast<T>(mel.values[i]);
  return m;
}

namespace detail {

template <typename T>
grad::VarId affine_ln(grad::Graph<T>& g, grad::VarId x, const BoundParams<T>& p,
                      const std::string& prefix) {
  return g.add_rowvec(g.mul_rowvec(g.layernorm(x), p[prefix + ".g"]), p[prefix + ".b"]);
}

// Multi-head scaled-dot-product attention composed from tape primitives.
template <typename T>
grad::VarId attention(grad::Graph<T>& g, const BoundParams<T>& p, const std::string& prefix,
                      grad::VarId queries_in, grad::VarId keys_in, bool causal) {
  const ModelConfig& cfg = *p.cfg;
  const int dh = cfg.head_dim();
  const grad::VarId q = g.matmul(queries_in, p[prefix + ".wq"]);
  const grad::VarId k = g.matmul(keys_in, p[prefix + ".wk"]);
  const grad::VarId v = g.matmul(keys_in, p[prefix + ".wv"]);

  grad::VarId mask = -1;
  if (causal) {
    const int n = g.val(q).rows;
    grad::Mat<T> m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) m.at(i, j) = T(-1e9);
    mask = g.constant(std::move(m));
  }

  std::vector<grad::VarId> heads;
  heads.reserve(static_cast<size_t>(cfg.n_heads));
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (int h = 0; h < cfg.n_heads; ++h) {
    const grad::VarId qh = g.col_slice(q, h * dh, dh);
    const grad::VarId kh = g.col_slice(k, h * dh, dh);
    const grad::VarId vh = g.col_slice(v, h * dh, dh);
    grad::VarId scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt);
    if (causal) scores = g.add(scores, mask);
    heads.push_back(g.matmul(g.softmax_rows(scores), vh));
  }
  return g.matmul(g.col_concat(heads), p[prefix + ".wo"]);
}

template <typename T>
grad::VarId ffn(grad::Graph<T>& g, const BoundParams<T>& p, const std::string& prefix,
                grad::VarId x) {
  const grad::VarId h = g.relu(g.add_rowvec(g.matmul(x, p[prefix + ".ff1.w"]), p[prefix + ".ff1.b"]));
  return g.add_rowvec(g.matmul(h, p[prefix + ".ff2.w"]), p[prefix + ".ff2.b"]);
}

}  // namespace detail

// Log-mel frames -> feature representation. Two stride-2 conv blocks, so the
// output has ceil(T/4) rows, then pre-LN transformer encoder layers.
template <typename T>
grad::VarId encode(grad::Graph<T>& g, const BoundParams<T>& p, const grad::Mat<T>& mel) {
  const ModelConfig& cfg = *p.cfg;
  if (mel.cols != cfg.n_mels)
    throw std::invalid_argument("encode: mel bin count does not match config");

  grad::VarId x = g.layernorm(g.constant(mel));  // scale-free input normalizer
  x = g.relu(g.add_rowvec(g.matmul(g.unfold_time(x, 3, cfg.temporal_stride), p["enc.conv1.w"]),
                          p["enc.conv1.b"]));
  x = g.relu(g.add_rowvec(g.matmul(g.unfold_time(x, 3, cfg.temporal_stride), p["enc.conv2.w"]),
                          p["enc.conv2.b"]));
  x = g.add(x, g.constant(sinusoidal_positions<T>(g.val(x).rows, cfg.d_model)));

  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string lp = "enc.l" + std::to_string(l);
    const grad::VarId h1 = detail::affine_ln(g, x, p, lp + ".ln1");
    x = g.add(x, detail::attention(g, p, lp + ".attn", h1, h1, false));
    const grad::VarId h2 = detail::affine_ln(g, x, p, lp + ".ln2");
    x = g.add(x, detail::ffn(g, p, lp, h2));
  }
  // gain-only output norm: an additive bias here would cancel out of every
  // feature difference and carry no gradient
  return g.mul_rowvec(g.layernorm(x), p["enc.out_ln.g"]);
}

// Feature difference of Z_input and Z_reference; plain subtraction, gradients
// reach both branches.
template <typename T>
grad::VarId feature_diff(grad::Graph<T>& g, grad::VarId z_input, grad::VarId z_ref) {
  return g.sub(z_input, z_ref);
}

// Teacher-forced decoder: causal self-attention over the caption prefix,
// cross-attention over z, logits for every prefix position.
template <typename T>
grad::VarId decode_teacher_forced(grad::Graph<T>& g, const BoundParams<T>& p, grad::VarId z,
                                  const Caption& y_in) {
  const ModelConfig& cfg = *p.cfg;
  if (y_in.empty()) throw std::invalid_argument("decode: empty input sequence");
  if (static_cast<int>(y_in.size()) > cfg.l_max)
    throw std::invalid_argument("decode: caption too long");

  grad::VarId x = g.embedding_gather(p["dec.embed"], y_in);
  x = g.add(x, g.constant(sinusoidal_positions<T>(static_cast<int>(y_in.size()), cfg.d_model)));

  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string lp = "dec.l" + std::to_string(l);
    const grad::VarId h1 = detail::affine_ln(g, x, p, lp + ".ln1");
    x = g.add(x, detail::attention(g, p, lp + ".self", h1, h1, true));
    const grad::VarId h2 = detail::affine_ln(g, x, p, lp + ".ln2");
    x = g.add(x, detail::attention(g, p, lp + ".cross", h2, z, false));
    const grad::VarId h3 = detail::affine_ln(g, x, p, lp + ".ln3");
    x = g.add(x, detail::ffn(g, p, lp, h3));
  }
  const grad::VarId h = detail::affine_ln(g, x, p, "dec.out_ln");
  return g.add_rowvec(g.matmul(h, p["dec.out.w"]), p["dec.out.b"]);
}

// Encoded frame count after the two stride-2 blocks.
int encoded_frames(int mel_frames, const ModelConfig& cfg);

}  // namespace audiodiff::model
