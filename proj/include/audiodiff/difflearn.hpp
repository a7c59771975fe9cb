#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "audiodiff/dsp.hpp"
#include "audiodiff/model.hpp"
#include "audiodiff/optim.hpp"
#include "audiodiff/scenegen.hpp"

namespace audiodiff::difflearn {

enum class TrainMode { baseline, mixgen, difference };

const char* mode_name(TrainMode m);
TrainMode mode_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 1e-3;
  uint64_t seed = 1;
  TrainMode mode = TrainMode::difference;
  double zero_ref_ratio = 0.5;  // lambda: share of zero-reference examples
  bool resample_references = true;
  int l_max = 24;

  void validate() const;
};

// One scene of a loaded corpus; the unmixed mel is cached, the waveform is
// fetched on demand (disk read or resynthesis) since mixing needs it fresh
// each epoch.
struct CorpusItem {
  std::string id;
  std::string caption_text;
  model::Caption target;
  std::vector<dsp::EventType> types;
  dsp::MelSpectrogram mel;
  std::string wav_path;                // absolute; empty -> render from events
  std::vector<dsp::EventSpec> events;
};

struct BankEntry {
  std::string id;
  dsp::EventType type;
  std::string caption_text;  // single-event caption, the case-(4) target
  dsp::Waveform wave;
  dsp::MelSpectrogram mel;
};

struct Corpus {
  scenegen::CorpusConfig gen_cfg;
  dsp::MelConfig mel_cfg;
  model::Vocabulary vocab;
  std::vector<CorpusItem> train, valid, test;
  std::vector<BankEntry> bank;
};

// Loads every split; root_dir empty means render clips in memory instead of
// reading the WAVs (used by tests; the CLI always goes through the files).
Corpus load_corpus(const scenegen::CorpusManifest& manifest, const std::string& root_dir,
                   const dsp::MelConfig& mel_cfg);

dsp::Waveform fetch_wave(const CorpusItem& item, const Corpus& corpus);

struct TrainingExample {
  dsp::MelSpectrogram input_mel;  // X or X+ or the mixgen mixture
  dsp::MelSpectrogram reference_mel;
  bool zero_reference = true;  // true: decode enc(X) directly (bypass)
  model::Caption target;
  std::string scene_id;
  std::string reference_id;  // empty for zero-reference / baseline / mixgen
};

// Difference-learning pairs: mix a bank reference into each scene at equal
// power, keep the scene's own caption as the target. With probability
// zero_ref_ratio the plain scene is emitted instead.
std::vector<TrainingExample> make_difference_examples(const Corpus& corpus,
                                                      const std::vector<const CorpusItem*>& scenes,
                                                      double zero_ref_ratio, uint64_t seed);

// Mixgen pairs: two scenes mixed at equal power, captions concatenated with
// "and". Pairs whose concatenated caption exceeds l_max are skipped and
// counted.
std::vector<TrainingExample> make_mixgen_examples(
    const Corpus& corpus, const std::vector<std::pair<const CorpusItem*, const CorpusItem*>>& pairs,
    int l_max, int* skipped);

std::vector<TrainingExample> make_baseline_examples(const std::vector<const CorpusItem*>& scenes);

struct StepResult {
  double loss = 0.0;
  grad::GradList<float> grads;  // aligned with the parameter store
};

// One forward/backward over a homogeneous batch. Loss is the mean over
// examples of the per-example cross entropy.
StepResult training_step(const std::vector<TrainingExample>& batch,
                         const grad::ParamStore<float>& params, const model::ModelConfig& cfg);

struct TrainLog {
  struct Step {
    int64_t step;
    TrainMode mode;
    double loss;
  };
  struct Epoch {
    int epoch;
    double valid_loss;
  };
  std::vector<Step> steps;
  std::vector<Epoch> epochs;

  std::string to_jsonl() const;
};

struct TrainResult {
  grad::ParamStore<float> final_params;
  grad::ParamStore<float> best_params;
  int best_epoch = -1;
  double best_valid_loss = 0.0;
  TrainLog log;
  int mixgen_skipped = 0;
};

// Teacher-forced cross entropy on the valid split via the zero-reference
// path; the model-selection signal for every mode.
double validation_loss(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                       const Corpus& corpus);

using StepCallback = std::function<void(const TrainLog::Step&)>;

TrainResult train(const TrainConfig& tc, const model::ModelConfig& mc, const Corpus& corpus,
                  const StepCallback& on_step = nullptr);

}  // namespace audiodiff::difflearn
