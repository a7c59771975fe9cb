#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "audiodiff/errors.hpp"
#include "audiodiff/harness.hpp"
#include "audiodiff/util.hpp"

namespace audiodiff::harness {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    throw ConfigError("config: bad unsigned integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void RunConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("config: run.out_dir must not be empty");
  if (sample_rate <= 0) throw ConfigError("config: dsp.sample_rate must be positive");
  if (mel.n_mels < 1) throw ConfigError("config: dsp.n_mels must be >= 1");
  if (mel.window_ms < mel.hop_ms) throw ConfigError("config: dsp.window_ms must be >= hop_ms");
  if (mel.log_floor <= 0) throw ConfigError("config: dsp.log_floor must be positive");
  // corpus/train/model checks live with their owners
  train.validate();
  if (d_model < 2 || n_heads < 1 || d_model % n_heads != 0)
    throw ConfigError("config: model.d_model must be a positive multiple of n_heads");
  if (decoding.beam_width < 1) throw ConfigError("config: eval.beam_width must be >= 1");
  if (decoding.max_len < 1) throw ConfigError("config: eval.max_len must be >= 1");
}

model::ModelConfig RunConfig::model_config(int vocab_size) const {
  model::ModelConfig mc;
  mc.n_mels = mel.n_mels;
  mc.d_model = d_model;
  mc.n_heads = n_heads;
  mc.ff_mult = ff_mult;
  mc.enc_layers = enc_layers;
  mc.dec_layers = dec_layers;
  mc.vocab_size = vocab_size;
  mc.l_max = l_max;
  mc.init_seed = util::derive_seed(seed, "init");
  return mc;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "[run]\n";
  out << "out_dir = " << out_dir << "\n";
  out << "seed = " << seed << "\n";
  out << "\n[dsp]\n";
  out << "sample_rate = " << sample_rate << "\n";
  out << "window_ms = " << fmt_double(mel.window_ms) << "\n";
  out << "hop_ms = " << fmt_double(mel.hop_ms) << "\n";
  out << "n_mels = " << mel.n_mels << "\n";
  out << "fft_size = " << mel.fft_size << "\n";
  out << "log_floor = " << fmt_double(mel.log_floor) << "\n";
  out << "\n[scenegen]\n";
  out << "train_scenes = " << corpus.train_scenes << "\n";
  out << "valid_scenes = " << corpus.valid_scenes << "\n";
  out << "test_scenes = " << corpus.test_scenes << "\n";
  out << "bank_per_type = " << corpus.bank_per_type << "\n";
  out << "max_events = " << corpus.max_events << "\n";
  out << "clip_duration_s = " << fmt_double(corpus.clip_duration_s) << "\n";
  out << "\n[model]\n";
  out << "d_model = " << d_model << "\n";
  out << "n_heads = " << n_heads << "\n";
  out << "ff_mult = " << ff_mult << "\n";
  out << "enc_layers = " << enc_layers << "\n";
  out << "dec_layers = " << dec_layers << "\n";
  out << "l_max = " << l_max << "\n";
  out << "\n[train]\n";
  out << "mode = " << difflearn::mode_name(train.mode) << "\n";
  out << "epochs = " << train.epochs << "\n";
  out << "batch_size = " << train.batch_size << "\n";
  out << "lr = " << fmt_double(train.lr) << "\n";
  out << "zero_ref_ratio = " << fmt_double(train.zero_ref_ratio) << "\n";
  out << "resample_references = " << (train.resample_references ? "true" : "false") << "\n";
  out << "\n[eval]\n";
  out << "strategy = "
      << (decoding.strategy == evalkit::DecodingConfig::Strategy::beam ? "beam" : "greedy") << "\n";
  out << "beam_width = " << decoding.beam_width << "\n";
  out << "max_len = " << decoding.max_len << "\n";
  return out.str();
}

std::string RunConfig::compat_hash() const {
  const std::string text = to_text();
  // hash only the data + architecture sections
  const size_t dsp_at = text.find("[dsp]");
  const size_t train_at = text.find("[train]");
  return util::hex64(util::fnv1a64(std::string_view(text).substr(dsp_at, train_at - dsp_at)));
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, Setter> setters;

  setters["run.out_dir"] = [&](const std::string&, const std::string& v) { cfg.out_dir = v; };
  setters["run.seed"] = [&](const std::string& k, const std::string& v) { cfg.seed = to_u64(k, v); };

  setters["dsp.sample_rate"] = [&](const std::string& k, const std::string& v) {
    cfg.sample_rate = to_int(k, v);
  };
  setters["dsp.window_ms"] = [&](const std::string& k, const std::string& v) {
    cfg.mel.window_ms = to_double(k, v);
  };
  setters["dsp.hop_ms"] = [&](const std::string& k, const std::string& v) {
    cfg.mel.hop_ms = to_double(k, v);
  };
  setters["dsp.n_mels"] = [&](const std::string& k, const std::string& v) {
    cfg.mel.n_mels = to_int(k, v);
  };
  setters["dsp.fft_size"] = [&](const std::string& k, const std::string& v) {
    cfg.mel.fft_size = to_int(k, v);
  };
  setters["dsp.log_floor"] = [&](const std::string& k, const std::string& v) {
    cfg.mel.log_floor = to_double(k, v);
  };

  setters["scenegen.train_scenes"] = [&](const std::string& k, const std::string& v) {
    cfg.corpus.train_scenes = to_int(k, v);
  };
  setters["scenegen.valid_scenes"] = [&](const std::string& k, const std::string& v) {
    cfg.corpus.valid_scenes = to_int(k, v);
  };
  setters["scenegen.test_scenes"] = [&](const std::string& k, const std::string& v) {
    cfg.corpus.test_scenes = to_int(k, v);
  };
  setters["scenegen.bank_per_type"] = [&](const std::string& k, const std::string& v) {
    cfg.corpus.bank_per_type = to_int(k, v);
  };
  setters["scenegen.max_events"] = [&](const std::string& k, const std::string& v) {
    cfg.corpus.max_events = to_int(k, v);
  };
  setters["scenegen.clip_duration_s"] = [&](const std::string& k, const std::string& v) {
    cfg.corpus.clip_duration_s = to_double(k, v);
  };

  setters["model.d_model"] = [&](const std::string& k, const std::string& v) {
    cfg.d_model = to_int(k, v);
  };
  setters["model.n_heads"] = [&](const std::string& k, const std::string& v) {
    cfg.n_heads = to_int(k, v);
  };
  setters["model.ff_mult"] = [&](const std::string& k, const std::string& v) {
    cfg.ff_mult = to_int(k, v);
  };
  setters["model.enc_layers"] = [&](const std::string& k, const std::string& v) {
    cfg.enc_layers = to_int(k, v);
  };
  setters["model.dec_layers"] = [&](const std::string& k, const std::string& v) {
    cfg.dec_layers = to_int(k, v);
  };
  setters["model.l_max"] = [&](const std::string& k, const std::string& v) {
    cfg.l_max = to_int(k, v);
    cfg.train.l_max = cfg.l_max;
  };

  setters["train.mode"] = [&](const std::string&, const std::string& v) {
    cfg.train.mode = difflearn::mode_from_name(v);
  };
  setters["train.epochs"] = [&](const std::string& k, const std::string& v) {
    cfg.train.epochs = to_int(k, v);
  };
  setters["train.batch_size"] = [&](const std::string& k, const std::string& v) {
    cfg.train.batch_size = to_int(k, v);
  };
  setters["train.lr"] = [&](const std::string& k, const std::string& v) {
    cfg.train.lr = to_double(k, v);
  };
  setters["train.zero_ref_ratio"] = [&](const std::string& k, const std::string& v) {
    cfg.train.zero_ref_ratio = to_double(k, v);
  };
  setters["train.resample_references"] = [&](const std::string& k, const std::string& v) {
    cfg.train.resample_references = to_bool(k, v);
  };

  setters["eval.strategy"] = [&](const std::string& k, const std::string& v) {
    if (v == "greedy")
      cfg.decoding.strategy = evalkit::DecodingConfig::Strategy::greedy;
    else if (v == "beam")
      cfg.decoding.strategy = evalkit::DecodingConfig::Strategy::beam;
    else
      throw ConfigError("config: bad value for " + k + ": '" + v + "'");
  };
  setters["eval.beam_width"] = [&](const std::string& k, const std::string& v) {
    cfg.decoding.beam_width = to_int(k, v);
  };
  setters["eval.max_len"] = [&](const std::string& k, const std::string& v) {
    cfg.decoding.max_len = to_int(k, v);
  };

  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config: malformed section at line " + std::to_string(line_no));
      section = t.substr(1, t.size() - 2);
      if (section != "run" && section != "dsp" && section != "scenegen" && section != "model" &&
          section != "train" && section != "eval")
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    if (section.empty()) throw ConfigError("config: key outside any section at line " + std::to_string(line_no));
    const std::string key = section + "." + trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config: unknown key " + key);
    it->second(key, value);
  }

  cfg.corpus.sample_rate = cfg.sample_rate;
  cfg.train.l_max = cfg.l_max;
  cfg.decoding.max_len = std::min(cfg.decoding.max_len, cfg.l_max);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace audiodiff::harness
