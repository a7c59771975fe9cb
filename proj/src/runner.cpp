#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "audiodiff/errors.hpp"
#include "audiodiff/gradcheck.hpp"
#include "audiodiff/harness.hpp"
#include "audiodiff/util.hpp"

namespace audiodiff::harness {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw IoError("short write: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void ensure_run_dir(const RunConfig& cfg) {
  std::error_code ec;
  for (const char* sub : {"", "wavs", "ckpt", "logs", "reports"}) {
    const fs::path p = fs::path(cfg.out_dir) / sub;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
  }
  write_file(fs::path(cfg.out_dir) / "config.snapshot", cfg.to_text());
}

scenegen::CorpusManifest load_manifest_file(const RunConfig& cfg) {
  const fs::path path = fs::path(cfg.out_dir) / "manifest.jsonl";
  return scenegen::manifest_from_jsonl(read_file(path), cfg.corpus);
}

difflearn::Corpus load_run_corpus(const RunConfig& cfg) {
  return difflearn::load_corpus(load_manifest_file(cfg), cfg.out_dir, cfg.mel);
}

}  // namespace

int cmd_gen(const RunConfig& cfg, std::ostream& out) {
  ensure_run_dir(cfg);
  const uint64_t corpus_seed = util::derive_seed(cfg.seed, "corpus");
  const auto manifest = scenegen::generate_corpus(cfg.corpus, corpus_seed);
  for (const auto& rec : manifest.records) {
    const dsp::Waveform wave = scenegen::render_record(rec, cfg.corpus);
    dsp::write_wav((fs::path(cfg.out_dir) / rec.wav_path).string(), wave);
  }
  const std::string jsonl = scenegen::manifest_to_jsonl(manifest);
  write_file(fs::path(cfg.out_dir) / "manifest.jsonl", jsonl);
  out << "wrote " << manifest.records.size() << " records under " << cfg.out_dir << "\n";
  out << "manifest digest: " << util::hex64(util::fnv1a64(jsonl)) << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& mode_override, std::ostream& out) {
  ensure_run_dir(cfg);
  difflearn::TrainConfig tc = cfg.train;
  if (!mode_override.empty()) tc.mode = difflearn::mode_from_name(mode_override);
  tc.seed = cfg.seed;

  const difflearn::Corpus corpus = load_run_corpus(cfg);
  const model::ModelConfig mc = cfg.model_config(corpus.vocab.size());

  const auto result = difflearn::train(tc, mc, corpus);

  const std::string mode = difflearn::mode_name(tc.mode);
  write_file(fs::path(cfg.out_dir) / "logs" / ("train_" + mode + ".jsonl"), result.log.to_jsonl());

  CheckpointHeader header;
  header.config_hash = cfg.compat_hash();
  header.mode = mode;
  header.step = static_cast<int64_t>(result.log.steps.size());
  header.best_epoch = result.best_epoch;
  header.valid_loss = result.best_valid_loss;
  header.vocab = corpus.vocab.tokens;
  save_checkpoint((fs::path(cfg.out_dir) / "ckpt" / (mode + "_best.ckpt")).string(),
                  result.best_params, header);
  CheckpointHeader final_header = header;
  final_header.valid_loss = result.log.epochs.back().valid_loss;
  save_checkpoint((fs::path(cfg.out_dir) / "ckpt" / (mode + "_final.ckpt")).string(),
                  result.final_params, final_header);

  out << "mode " << mode << ": " << result.log.steps.size() << " steps, final train loss "
      << result.log.steps.back().loss << ", final valid loss "
      << result.log.epochs.back().valid_loss << ", best valid loss " << result.best_valid_loss
      << " (epoch " << result.best_epoch << ")\n";
  if (tc.mode == difflearn::TrainMode::mixgen)
    out << "mixgen pairs skipped for length: " << result.mixgen_skipped << "\n";
  return 0;
}

namespace {

Checkpoint load_compatible_checkpoint(const RunConfig& cfg, const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.header.config_hash != cfg.compat_hash())
    throw ConfigError("checkpoint config hash " + ckpt.header.config_hash +
                      " does not match this config (" + cfg.compat_hash() + ")");
  return ckpt;
}

}  // namespace

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path, std::ostream& out) {
  ensure_run_dir(cfg);
  const Checkpoint ckpt = load_compatible_checkpoint(cfg, ckpt_path);
  const difflearn::Corpus corpus = load_run_corpus(cfg);
  if (ckpt.header.vocab != corpus.vocab.tokens)
    throw ConfigError("checkpoint vocabulary does not match the corpus grammar");
  const model::ModelConfig mc = cfg.model_config(corpus.vocab.size());

  const auto report = evalkit::evaluate(ckpt.params, mc, corpus, cfg.decoding);
  const std::string stem = "metrics_" + ckpt.header.mode;
  write_file(fs::path(cfg.out_dir) / "reports" / (stem + ".json"), report.to_json());
  write_file(fs::path(cfg.out_dir) / "reports" / (stem + ".txt"), report.to_table());
  out << report.to_table();
  return 0;
}

int cmd_probe(const RunConfig& cfg, const std::string& ckpt_path, std::ostream& out) {
  ensure_run_dir(cfg);
  const Checkpoint ckpt = load_compatible_checkpoint(cfg, ckpt_path);
  const difflearn::Corpus corpus = load_run_corpus(cfg);
  if (ckpt.header.vocab != corpus.vocab.tokens)
    throw ConfigError("checkpoint vocabulary does not match the corpus grammar");
  const model::ModelConfig mc = cfg.model_config(corpus.vocab.size());

  const auto report = evalkit::difference_probe(ckpt.params, mc, corpus, cfg.decoding,
                                                util::derive_seed(cfg.seed, "probe"));
  const std::string stem = "probe_" + ckpt.header.mode;
  write_file(fs::path(cfg.out_dir) / "reports" / (stem + ".json"), report.to_json());
  write_file(fs::path(cfg.out_dir) / "reports" / (stem + ".txt"), report.to_table());
  out << report.to_table();
  return 0;
}

int cmd_gradcheck(std::ostream& out) {
  const auto checks = grad::check_all_primitives(10, 1e-5, 1e-4);
  bool all_pass = true;
  for (const auto& c : checks) {
    out << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  max_rel_err=" << c.max_rel_err
        << "\n";
    all_pass = all_pass && c.pass;
  }
  out << (all_pass ? "gradcheck: all primitives pass" : "gradcheck: FAILURES above") << "\n";
  return all_pass ? 0 : 4;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace audiodiff::harness
