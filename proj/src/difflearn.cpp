#include "audiodiff/difflearn.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "audiodiff/errors.hpp"
#include "audiodiff/util.hpp"

namespace audiodiff::difflearn {

using grad::Graph;
using grad::Mat;
using grad::VarId;
using json = nlohmann::ordered_json;

const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::mixgen: return "mixgen";
    case TrainMode::difference: return "difference";
  }
  return "unknown";
}

TrainMode mode_from_name(const std::string& name) {
  if (name == "baseline") return TrainMode::baseline;
  if (name == "mixgen") return TrainMode::mixgen;
  if (name == "difference") return TrainMode::difference;
  throw ConfigError("unknown training mode: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: bad learning rate");
  if (zero_ref_ratio < 0.0 || zero_ref_ratio > 1.0)
    throw ConfigError("train: zero_ref_ratio must be in [0,1]");
  if (l_max < 2) throw ConfigError("train: l_max must be >= 2");
}

Corpus load_corpus(const scenegen::CorpusManifest& manifest, const std::string& root_dir,
                   const dsp::MelConfig& mel_cfg) {
  Corpus corpus;
  corpus.gen_cfg = manifest.config;
  corpus.mel_cfg = mel_cfg;
  corpus.vocab = model::Vocabulary::from_words(scenegen::lexicon_words());

  auto load_wave = [&](const scenegen::SceneRecord& rec) {
    if (root_dir.empty()) return scenegen::render_record(rec, manifest.config);
    return dsp::read_wav((std::filesystem::path(root_dir) / rec.wav_path).string());
  };

  for (const auto& rec : manifest.records) {
    if (rec.split == "bank") {
      BankEntry entry;
      entry.id = rec.id;
      entry.type = rec.events.front().type;
      entry.caption_text = rec.caption;
      entry.wave = load_wave(rec);
      entry.mel = dsp::mel_spectrogram(entry.wave, mel_cfg);
      corpus.bank.push_back(std::move(entry));
      continue;
    }
    CorpusItem item;
    item.id = rec.id;
    item.caption_text = rec.caption;
    item.target = model::tokenize(rec.caption, corpus.vocab);
    for (const auto& e : rec.events) item.types.push_back(e.type);
    item.events = rec.events;
    if (!root_dir.empty())
      item.wav_path = (std::filesystem::path(root_dir) / rec.wav_path).string();
    item.mel = dsp::mel_spectrogram(load_wave(rec), mel_cfg);
    if (rec.split == "train")
      corpus.train.push_back(std::move(item));
    else if (rec.split == "valid")
      corpus.valid.push_back(std::move(item));
    else if (rec.split == "test")
      corpus.test.push_back(std::move(item));
    else
      throw IoError("manifest: unknown split " + rec.split);
  }
  return corpus;
}

dsp::Waveform fetch_wave(const CorpusItem& item, const Corpus& corpus) {
  if (!item.wav_path.empty()) return dsp::read_wav(item.wav_path);
  scenegen::SceneRecord rec;
  rec.events = item.events;
  return scenegen::render_record(rec, corpus.gen_cfg);
}

namespace {

bool has_type(const std::vector<dsp::EventType>& types, dsp::EventType t) {
  for (auto x : types)
    if (x == t) return true;
  return false;
}

const BankEntry& draw_reference(const Corpus& corpus, const CorpusItem& scene, util::Rng& rng) {
  std::vector<const BankEntry*> admissible;
  for (const auto& b : corpus.bank)
    if (!has_type(scene.types, b.type)) admissible.push_back(&b);
  if (admissible.empty())
    throw std::invalid_argument("no admissible reference for scene " + scene.id);
  return *admissible[static_cast<size_t>(rng.next_below(admissible.size()))];
}

}  // namespace

std::vector<TrainingExample> make_difference_examples(const Corpus& corpus,
                                                      const std::vector<const CorpusItem*>& scenes,
                                                      double zero_ref_ratio, uint64_t seed) {
  std::vector<TrainingExample> out;
  out.reserve(scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    const CorpusItem& scene = *scenes[i];
    util::Rng rng(util::derive_seed(seed, "pair", i));
    TrainingExample ex;
    ex.scene_id = scene.id;
    ex.target = scene.target;
    if (rng.next_real() < zero_ref_ratio) {
      ex.zero_reference = true;
      ex.input_mel = scene.mel;
    } else {
      const BankEntry& ref = draw_reference(corpus, scene, rng);
      const dsp::Waveform scene_wave = fetch_wave(scene, corpus);
      const dsp::MixResult mixed = dsp::mix_same_power(scene_wave, ref.wave);
      ex.zero_reference = false;
      ex.input_mel = dsp::mel_spectrogram(mixed.mixed, corpus.mel_cfg);
      ex.reference_mel = ref.mel;
      ex.reference_id = ref.id;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> make_mixgen_examples(
    const Corpus& corpus, const std::vector<std::pair<const CorpusItem*, const CorpusItem*>>& pairs,
    int l_max, int* skipped) {
  std::vector<TrainingExample> out;
  for (const auto& [first, second] : pairs) {
    if (first->id == second->id)
      throw std::invalid_argument("mixgen: a scene cannot be paired with itself");
    // <bos> w1.. "and" w2.. <eos>
    model::Caption target;
    target.push_back(corpus.vocab.bos_id);
    target.insert(target.end(), first->target.begin() + 1, first->target.end() - 1);
    target.push_back(corpus.vocab.id_of(scenegen::kConcatWord));
    target.insert(target.end(), second->target.begin() + 1, second->target.end() - 1);
    target.push_back(corpus.vocab.eos_id);
    if (static_cast<int>(target.size()) > l_max) {
      if (skipped) ++(*skipped);
      continue;
    }
    const dsp::Waveform a = fetch_wave(*first, corpus);
    const dsp::Waveform b = fetch_wave(*second, corpus);
    const dsp::MixResult mixed = dsp::mix_same_power(a, b);
    TrainingExample ex;
    ex.zero_reference = true;  // decoded straight from enc(X_mix)
    ex.input_mel = dsp::mel_spectrogram(mixed.mixed, corpus.mel_cfg);
    ex.target = std::move(target);
    ex.scene_id = first->id + "+" + second->id;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> make_baseline_examples(const std::vector<const CorpusItem*>& scenes) {
  std::vector<TrainingExample> out;
  out.reserve(scenes.size());
  for (const CorpusItem* scene : scenes) {
    TrainingExample ex;
    ex.zero_reference = true;
    ex.input_mel = scene->mel;
    ex.target = scene->target;
    ex.scene_id = scene->id;
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

// Builds the per-example loss node. The zero-reference case bypasses the
// subtraction entirely, which is what makes it operation-for-operation equal
// to a baseline step.
VarId example_loss(Graph<float>& g, const model::BoundParams<float>& bound,
                   const TrainingExample& ex, const model::ModelConfig& cfg, int pad_id) {
  if (static_cast<int>(ex.target.size()) > cfg.l_max)
    throw std::invalid_argument("training: caption exceeds l_max for scene " + ex.scene_id);
  const Mat<float> input = model::mel_to_mat<float>(ex.input_mel);
  VarId z = model::encode(g, bound, input);
  if (!ex.zero_reference) {
    const VarId z_ref = model::encode(g, bound, model::mel_to_mat<float>(ex.reference_mel));
    z = model::feature_diff(g, z, z_ref);
  }
  const model::Caption y_in(ex.target.begin(), ex.target.end() - 1);
  const std::vector<int> targets(ex.target.begin() + 1, ex.target.end());
  const VarId logits = model::decode_teacher_forced(g, bound, z, y_in);
  return g.softmax_cross_entropy(logits, targets, pad_id);
}

}  // namespace

StepResult training_step(const std::vector<TrainingExample>& batch,
                         const grad::ParamStore<float>& params, const model::ModelConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
  Graph<float> g(true);
  const auto bound = model::bind_params(g, params, cfg);

  VarId total = -1;
  for (const auto& ex : batch) {
    const VarId loss = example_loss(g, bound, ex, cfg, 0 /*pad*/);
    total = (total < 0) ? loss : g.add(total, loss);
  }
  const VarId mean = g.scale(total, 1.0f / static_cast<float>(batch.size()));
  g.backward(mean);

  StepResult res;
  res.loss = static_cast<double>(g.scalar(mean));
  res.grads.reserve(static_cast<size_t>(params.size()));
  for (VarId id : bound.ids) res.grads.push_back(g.grad(id));
  return res;
}

double validation_loss(const grad::ParamStore<float>& params, const model::ModelConfig& cfg,
                       const Corpus& corpus) {
  if (corpus.valid.empty()) throw std::invalid_argument("validation: empty valid split");
  double total = 0.0;
  for (const auto& item : corpus.valid) {
    Graph<float> g(false);
    const auto bound = model::bind_params(g, params, cfg);
    const VarId z = model::encode(g, bound, model::mel_to_mat<float>(item.mel));
    const model::Caption y_in(item.target.begin(), item.target.end() - 1);
    const std::vector<int> targets(item.target.begin() + 1, item.target.end());
    const VarId logits = model::decode_teacher_forced(g, bound, z, y_in);
    total += static_cast<double>(g.scalar(g.softmax_cross_entropy(logits, targets, 0)));
  }
  return total / static_cast<double>(corpus.valid.size());
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& s : steps) {
    json rec;
    rec["step"] = s.step;
    rec["mode"] = mode_name(s.mode);
    rec["loss"] = s.loss;
    out += rec.dump();
    out += '\n';
  }
  for (const auto& e : epochs) {
    json rec;
    rec["epoch"] = e.epoch;
    rec["valid_loss"] = e.valid_loss;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

TrainResult train(const TrainConfig& tc, const model::ModelConfig& mc, const Corpus& corpus,
                  const StepCallback& on_step) {
  tc.validate();
  mc.validate();
  if (corpus.train.empty() || corpus.valid.empty())
    throw std::invalid_argument("train: corpus needs non-empty train and valid splits");

  grad::ParamStore<float> params = model::init_params(mc);
  grad::Adam<float> opt({static_cast<float>(tc.lr), 0.9f, 0.999f, 1e-8f});

  TrainResult result;
  result.mixgen_skipped = 0;
  int64_t step = 0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<const CorpusItem*> order;
    order.reserve(corpus.train.size());
    for (const auto& item : corpus.train) order.push_back(&item);
    util::Rng shuffle_rng(util::derive_seed(tc.seed, "shuffle", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    std::vector<TrainingExample> examples;
    const uint64_t epoch_ref_seed =
        util::derive_seed(tc.seed, "refs", tc.resample_references ? static_cast<uint64_t>(epoch) : 0);
    switch (tc.mode) {
      case TrainMode::baseline:
        examples = make_baseline_examples(order);
        break;
      case TrainMode::difference:
        examples = make_difference_examples(corpus, order, tc.zero_ref_ratio, epoch_ref_seed);
        break;
      case TrainMode::mixgen: {
        // every scene heads one pair; overlong pairs fall back to the plain
        // example so the steps-per-epoch arithmetic stays fixed
        util::Rng pair_rng(epoch_ref_seed);
        std::vector<std::pair<const CorpusItem*, const CorpusItem*>> pairs;
        pairs.reserve(order.size());
        for (size_t i = 0; i < order.size(); ++i) {
          size_t j = static_cast<size_t>(pair_rng.next_below(order.size() - 1));
          if (j >= i) ++j;
          pairs.emplace_back(order[i], order[j]);
        }
        examples.reserve(order.size());
        for (size_t i = 0; i < pairs.size(); ++i) {
          int skipped = 0;
          auto made = make_mixgen_examples(corpus, {pairs[i]}, tc.l_max, &skipped);
          if (skipped > 0) {
            result.mixgen_skipped += skipped;
            auto plain = make_baseline_examples({order[i]});
            examples.push_back(std::move(plain.front()));
          } else {
            examples.push_back(std::move(made.front()));
          }
        }
        break;
      }
    }

    for (size_t off = 0; off < examples.size(); off += static_cast<size_t>(tc.batch_size)) {
      const size_t end = std::min(examples.size(), off + static_cast<size_t>(tc.batch_size));
      const std::vector<TrainingExample> batch(examples.begin() + static_cast<long>(off),
                                               examples.begin() + static_cast<long>(end));
      StepResult sr = training_step(batch, params, mc);
      if (!std::isfinite(sr.loss)) throw NumericError("train: non-finite loss at step " +
                                                      std::to_string(step + 1));
      opt.step(params, sr.grads);
      ++step;
      TrainLog::Step entry{step, tc.mode, sr.loss};
      result.log.steps.push_back(entry);
      if (on_step) on_step(entry);
    }

    const double vloss = validation_loss(params, mc, corpus);
    result.log.epochs.push_back({epoch, vloss});
    if (result.best_epoch < 0 || vloss < result.best_valid_loss) {
      result.best_epoch = epoch;
      result.best_valid_loss = vloss;
      result.best_params = params;
    }
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace audiodiff::difflearn
