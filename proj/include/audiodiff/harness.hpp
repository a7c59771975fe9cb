#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "audiodiff/difflearn.hpp"
#include "audiodiff/evalkit.hpp"
#include "audiodiff/model.hpp"
#include "audiodiff/scenegen.hpp"

namespace audiodiff::harness {

// Flat INI-style run configuration. Unknown sections or keys are rejected.
struct RunConfig {
  std::string out_dir = "runs/default";
  uint64_t seed = 1;

  int sample_rate = 16000;
  dsp::MelConfig mel;

  scenegen::CorpusConfig corpus;  // sample_rate mirrored from [dsp]

  // [model]; vocab_size and init_seed are filled at run time
  int d_model = 128;
  int n_heads = 4;
  int ff_mult = 2;
  int enc_layers = 2;
  int dec_layers = 2;
  int l_max = 24;

  difflearn::TrainConfig train;

  evalkit::DecodingConfig decoding;

  void validate() const;
  model::ModelConfig model_config(int vocab_size) const;

  // Canonical snapshot: every key explicit, fixed order, byte-deterministic.
  std::string to_text() const;

  // Hash of the data + architecture sections ([dsp], [scenegen], [model]);
  // checkpoints carry it and eval/probe refuse mismatched configs.
  std::string compat_hash() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// ---- checkpoint: JSON header + flat little-endian f32 payload ----

struct CheckpointHeader {
  std::string config_hash;
  std::string mode;
  int64_t step = 0;
  int best_epoch = -1;
  double valid_loss = 0.0;
  std::vector<std::string> vocab;
  // shapes in payload order
  struct Shape {
    std::string name;
    int rows = 0;
    int cols = 0;
  };
  std::vector<Shape> shapes;
};

void save_checkpoint(const std::string& path, const grad::ParamStore<float>& params,
                     const CheckpointHeader& header);

struct Checkpoint {
  CheckpointHeader header;
  grad::ParamStore<float> params;
};

Checkpoint load_checkpoint(const std::string& path);

// ---- command entry points; return process exit codes ----
// 0 ok, 2 config error, 3 I/O error, 4 numeric error.

int cmd_gen(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, const std::string& mode_override, std::ostream& out);
int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path, std::ostream& out);
int cmd_probe(const RunConfig& cfg, const std::string& ckpt_path, std::ostream& out);
int cmd_gradcheck(std::ostream& out);

// Exception-to-exit-code mapping shared by the CLI and tests.
int run_guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace audiodiff::harness
