#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "audiodiff/errors.hpp"
#include "audiodiff/harness.hpp"
#include "audiodiff/util.hpp"

using namespace audiodiff;
namespace fs = std::filesystem;

namespace {

std::string tiny_config_text(const std::string& out_dir, uint64_t seed = 5) {
  std::ostringstream out;
  out << "[run]\n"
      << "out_dir = " << out_dir << "\n"
      << "seed = " << seed << "\n"
      << "[dsp]\n"
      << "sample_rate = 8000\n"
      << "n_mels = 16\n"
      << "[scenegen]\n"
      << "train_scenes = 8\n"
      << "valid_scenes = 3\n"
      << "test_scenes = 3\n"
      << "bank_per_type = 5\n"
      << "clip_duration_s = 2.0\n"
      << "[model]\n"
      << "d_model = 16\n"
      << "n_heads = 2\n"
      << "enc_layers = 1\n"
      << "dec_layers = 1\n"
      << "[train]\n"
      << "mode = difference\n"
      << "epochs = 2\n"
      << "batch_size = 4\n"
      << "lr = 0.002\n";
  return out.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("config: parse/serialize round trip and defaults") {
  const auto cfg = harness::parse_config_text(tiny_config_text("/tmp/x"));
  CHECK(cfg.seed == 5);
  CHECK(cfg.sample_rate == 8000);
  CHECK(cfg.mel.n_mels == 16);
  CHECK(cfg.corpus.train_scenes == 8);
  CHECK(cfg.corpus.sample_rate == 8000);
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.d_model == 16);
  CHECK(cfg.mel.window_ms == 40.0);  // untouched default

  const auto again = harness::parse_config_text(cfg.to_text());
  CHECK(again.to_text() == cfg.to_text());
  CHECK(again.compat_hash() == cfg.compat_hash());
}

TEST_CASE("config: unknown keys and sections rejected") {
  CHECK_THROWS_AS(harness::parse_config_text("[run]\nbogus_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_config_text("[bogus]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_config_text("[train]\nepochs = zero\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_config_text("orphan = 1\n"), ConfigError);
  CHECK_THROWS_AS(harness::parse_config_text("[train]\nepochs = 0\n"), ConfigError);
}

TEST_CASE("config: compat hash tracks data/architecture but not run/train/eval") {
  auto base = harness::parse_config_text(tiny_config_text("/tmp/a", 5));
  auto other_seed = harness::parse_config_text(tiny_config_text("/tmp/b", 99));
  CHECK(base.compat_hash() == other_seed.compat_hash());
  auto bigger = base;
  bigger.d_model = 32;
  CHECK(base.compat_hash() != bigger.compat_hash());
  auto more_mels = base;
  more_mels.mel.n_mels = 32;
  CHECK(base.compat_hash() != more_mels.compat_hash());
}

TEST_CASE("checkpoint: round trip preserves every parameter bit-exactly") {
  util::Rng rng(7);
  grad::ParamStore<float> params;
  params.add("w1", grad::Mat<float>::gauss(7, 5, 1.0f, rng));
  params.add("b1", grad::Mat<float>::gauss(1, 5, 1.0f, rng));

  harness::CheckpointHeader header;
  header.config_hash = "deadbeefdeadbeef";
  header.mode = "difference";
  header.step = 42;
  header.best_epoch = 3;
  header.valid_loss = 1.25;
  header.vocab = {"<pad>", "<bos>", "<eos>", "tone"};

  const fs::path dir = fresh_dir("audiodiff_ckpt_test");
  const std::string path = (dir / "test.ckpt").string();
  harness::save_checkpoint(path, params, header);

  const auto ckpt = harness::load_checkpoint(path);
  CHECK(ckpt.header.config_hash == header.config_hash);
  CHECK(ckpt.header.mode == "difference");
  CHECK(ckpt.header.step == 42);
  CHECK(ckpt.header.vocab == header.vocab);
  REQUIRE(ckpt.params.size() == 2);
  for (int i = 0; i < params.size(); ++i) {
    REQUIRE(ckpt.params.value(i).size() == params.value(i).size());
    CHECK(std::memcmp(ckpt.params.value(i).v.data(), params.value(i).v.data(),
                      params.value(i).size() * sizeof(float)) == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: corrupt and truncated files rejected") {
  const fs::path dir = fresh_dir("audiodiff_ckpt_bad");
  const fs::path garbage = dir / "garbage.ckpt";
  {
    std::ofstream f(garbage, std::ios::binary);
    f << "not a checkpoint";
  }
  CHECK_THROWS_AS(harness::load_checkpoint(garbage.string()), IoError);
  CHECK_THROWS_AS(harness::load_checkpoint((dir / "missing.ckpt").string()), IoError);

  // truncated payload
  util::Rng rng(9);
  grad::ParamStore<float> params;
  params.add("w", grad::Mat<float>::gauss(4, 4, 1.0f, rng));
  harness::CheckpointHeader header;
  header.config_hash = "x";
  header.mode = "baseline";
  const fs::path good = dir / "good.ckpt";
  harness::save_checkpoint(good.string(), params, header);
  const std::string bytes = slurp(good);
  const fs::path cut = dir / "cut.ckpt";
  {
    std::ofstream f(cut, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
  }
  CHECK_THROWS_AS(harness::load_checkpoint(cut.string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("cmd_gen: writes the corpus, digest is reproducible") {
  const fs::path dir_a = fresh_dir("audiodiff_gen_a");
  const fs::path dir_b = fresh_dir("audiodiff_gen_b");
  std::ostringstream out_a, out_b;
  const auto cfg_a = harness::parse_config_text(tiny_config_text(dir_a.string()));
  const auto cfg_b = harness::parse_config_text(tiny_config_text(dir_b.string()));
  CHECK(harness::cmd_gen(cfg_a, out_a) == 0);
  CHECK(harness::cmd_gen(cfg_b, out_b) == 0);

  CHECK(fs::exists(dir_a / "manifest.jsonl"));
  CHECK(fs::exists(dir_a / "config.snapshot"));
  CHECK(fs::exists(dir_a / "wavs" / "train_00000.wav"));
  // 8 + 3 + 3 scenes + 50 bank entries
  size_t wavs = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir_a / "wavs")) ++wavs;
  CHECK(wavs == 64);

  // same seed, different dirs: byte-identical manifest, same printed digest
  CHECK(slurp(dir_a / "manifest.jsonl") == slurp(dir_b / "manifest.jsonl"));
  const std::string line_a = out_a.str().substr(out_a.str().find("digest"));
  const std::string line_b = out_b.str().substr(out_b.str().find("digest"));
  CHECK(line_a == line_b);
  fs::remove_all(dir_b);

  SUBCASE("train, checkpoint round trip, eval, probe") {
    std::ostringstream out;
    CHECK(harness::cmd_train(cfg_a, "", out) == 0);
    const fs::path best = dir_a / "ckpt" / "difference_best.ckpt";
    const fs::path final_ck = dir_a / "ckpt" / "difference_final.ckpt";
    REQUIRE(fs::exists(best));
    REQUIRE(fs::exists(final_ck));
    CHECK(fs::exists(dir_a / "logs" / "train_difference.jsonl"));

    // mode recorded; reloaded params reproduce the logged validation loss bit-for-bit
    const auto ckpt = harness::load_checkpoint(final_ck.string());
    CHECK(ckpt.header.mode == "difference");
    const auto corpus = difflearn::load_corpus(
        scenegen::manifest_from_jsonl(slurp(dir_a / "manifest.jsonl"), cfg_a.corpus),
        dir_a.string(), cfg_a.mel);
    const auto mc = cfg_a.model_config(corpus.vocab.size());
    const double reval = difflearn::validation_loss(ckpt.params, mc, corpus);
    CHECK(std::memcmp(&reval, &ckpt.header.valid_loss, sizeof(double)) == 0);

    CHECK(harness::cmd_eval(cfg_a, final_ck.string(), out) == 0);
    CHECK(harness::cmd_probe(cfg_a, final_ck.string(), out) == 0);
    CHECK(fs::exists(dir_a / "reports" / "metrics_difference.json"));
    CHECK(fs::exists(dir_a / "reports" / "metrics_difference.txt"));
    CHECK(fs::exists(dir_a / "reports" / "probe_difference.json"));

    // config-hash mismatch is a config error (exit 2)
    auto other = cfg_a;
    other.d_model = 32;
    other.n_heads = 4;
    const int rc = harness::run_guarded(
        [&]() { return harness::cmd_eval(other, final_ck.string(), out); }, out);
    CHECK(rc == 2);
  }
  fs::remove_all(dir_a);
}

TEST_CASE("cmd_gen: unwritable output location exits 3") {
  const fs::path dir = fresh_dir("audiodiff_gen_blocked");
  { std::ofstream f(dir / "blocker"); }
  auto cfg = harness::parse_config_text(tiny_config_text((dir / "blocker" / "run").string()));
  std::ostringstream out;
  const int rc = harness::run_guarded([&]() { return harness::cmd_gen(cfg, out); }, out);
  CHECK(rc == 3);
  fs::remove_all(dir);
}

TEST_CASE("cmd_train without a corpus exits 3") {
  const fs::path dir = fresh_dir("audiodiff_no_corpus");
  auto cfg = harness::parse_config_text(tiny_config_text(dir.string()));
  std::ostringstream out;
  const int rc = harness::run_guarded([&]() { return harness::cmd_train(cfg, "", out); }, out);
  CHECK(rc == 3);
  fs::remove_all(dir);
}

TEST_CASE("cmd_gradcheck: lists every primitive exactly once, all passing") {
  std::ostringstream out;
  CHECK(harness::cmd_gradcheck(out) == 0);
  std::istringstream in(out.str());
  std::string line;
  std::set<std::string> names;
  size_t pass_lines = 0;
  while (std::getline(in, line)) {
    if (line.rfind("PASS", 0) == 0 || line.rfind("FAIL", 0) == 0) {
      ++pass_lines;
      std::istringstream ls(line);
      std::string status, name;
      ls >> status >> name;
      CHECK(status == "PASS");
      CHECK(names.insert(name).second);  // exactly once
    }
  }
  CHECK(pass_lines == 20);
  CHECK(names.size() == 20);
}

TEST_CASE("end-to-end determinism: identical config and seed give identical bytes") {
  const fs::path dir_a = fresh_dir("audiodiff_det_a");
  const fs::path dir_b = fresh_dir("audiodiff_det_b");
  std::ostringstream sink;
  for (const auto& dir : {dir_a, dir_b}) {
    const auto cfg = harness::parse_config_text(tiny_config_text(dir.string(), 77));
    REQUIRE(harness::cmd_gen(cfg, sink) == 0);
    REQUIRE(harness::cmd_train(cfg, "", sink) == 0);
    const std::string ckpt = (dir / "ckpt" / "difference_best.ckpt").string();
    REQUIRE(harness::cmd_eval(cfg, ckpt, sink) == 0);
    REQUIRE(harness::cmd_probe(cfg, ckpt, sink) == 0);
  }
  for (const char* rel :
       {"manifest.jsonl", "logs/train_difference.jsonl", "reports/metrics_difference.json",
        "reports/metrics_difference.txt", "reports/probe_difference.json",
        "reports/probe_difference.txt"}) {
    INFO("file: ", rel);
    CHECK(slurp(dir_a / rel) == slurp(dir_b / rel));
  }
  // checkpoints are byte-identical too
  CHECK(slurp(dir_a / "ckpt" / "difference_best.ckpt") ==
        slurp(dir_b / "ckpt" / "difference_best.ckpt"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}
