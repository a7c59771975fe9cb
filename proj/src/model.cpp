#include "audiodiff/model.hpp"

#include <cmath>
#include <stdexcept>

#include "audiodiff/util.hpp"

namespace audiodiff::model {

void ModelConfig::validate() const {
  if (n_mels < 1) throw std::invalid_argument("model: n_mels must be >= 1");
  if (d_model < 2 || d_model % n_heads != 0)
    throw std::invalid_argument("model: d_model must be a positive multiple of n_heads");
  if (ff_mult < 1 || enc_layers < 0 || dec_layers < 0)
    throw std::invalid_argument("model: bad layer configuration");
  if (vocab_size < 4) throw std::invalid_argument("model: vocabulary too small");
  if (l_max < 2) throw std::invalid_argument("model: l_max must be >= 2");
  if (temporal_stride < 1) throw std::invalid_argument("model: bad temporal stride");
}

int encoded_frames(int mel_frames, const ModelConfig& cfg) {
  int t = mel_frames;
  for (int block = 0; block < 2; ++block) t = (t - 1) / cfg.temporal_stride + 1;
  return t;
}

namespace {

using grad::Mat;

Mat<float> he_init(int rows, int cols, util::Rng& rng) {
  const float std = std::sqrt(2.0f / static_cast<float>(rows));
  return Mat<float>::gauss(rows, cols, std, rng);
}

void add_ln(grad::ParamStore<float>& p, const std::string& prefix, int dim) {
  p.add(prefix + ".g", Mat<float>::full(1, dim, 1.0f));
  p.add(prefix + ".b", Mat<float>::zeros(1, dim));
}

void add_attention(grad::ParamStore<float>& p, const std::string& prefix, int dim,
                   util::Rng& rng) {
  p.add(prefix + ".wq", he_init(dim, dim, rng));
  p.add(prefix + ".wk", he_init(dim, dim, rng));
  p.add(prefix + ".wv", he_init(dim, dim, rng));
  p.add(prefix + ".wo", he_init(dim, dim, rng));
}

void add_ffn(grad::ParamStore<float>& p, const std::string& prefix, int dim, int ff,
             util::Rng& rng) {
  p.add(prefix + ".ff1.w", he_init(dim, ff, rng));
  p.add(prefix + ".ff1.b", Mat<float>::zeros(1, ff));
  p.add(prefix + ".ff2.w", he_init(ff, dim, rng));
  p.add(prefix + ".ff2.b", Mat<float>::zeros(1, dim));
}

}  // namespace

grad::ParamStore<float> init_params(const ModelConfig& cfg) {
  cfg.validate();
  util::Rng rng(util::derive_seed(cfg.init_seed, "model_init"));
  grad::ParamStore<float> p;

  p.add("enc.conv1.w", he_init(3 * cfg.n_mels, cfg.d_model, rng));
  p.add("enc.conv1.b", Mat<float>::zeros(1, cfg.d_model));
  p.add("enc.conv2.w", he_init(3 * cfg.d_model, cfg.d_model, rng));
  p.add("enc.conv2.b", Mat<float>::zeros(1, cfg.d_model));
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const std::string lp = "enc.l" + std::to_string(l);
    add_ln(p, lp + ".ln1", cfg.d_model);
    add_attention(p, lp + ".attn", cfg.d_model, rng);
    add_ln(p, lp + ".ln2", cfg.d_model);
    add_ffn(p, lp, cfg.d_model, cfg.ff_dim(), rng);
  }
  p.add("enc.out_ln.g", Mat<float>::full(1, cfg.d_model, 1.0f));

  p.add("dec.embed", Mat<float>::gauss(cfg.vocab_size, cfg.d_model, 0.02f, rng));
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string lp = "dec.l" + std::to_string(l);
    add_ln(p, lp + ".ln1", cfg.d_model);
    add_attention(p, lp + ".self", cfg.d_model, rng);
    add_ln(p, lp + ".ln2", cfg.d_model);
    add_attention(p, lp + ".cross", cfg.d_model, rng);
    add_ln(p, lp + ".ln3", cfg.d_model);
    add_ffn(p, lp, cfg.d_model, cfg.ff_dim(), rng);
  }
  add_ln(p, "dec.out_ln", cfg.d_model);

  // zero-initialized output projection: uniform softmax at step zero
  p.add("dec.out.w", Mat<float>::zeros(cfg.d_model, cfg.vocab_size));
  p.add("dec.out.b", Mat<float>::zeros(1, cfg.vocab_size));
  return p;
}

}  // namespace audiodiff::model
