#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audiodiff/dsp.hpp"

namespace audiodiff::scenegen {

// Closed phrase lexicon: every event type maps to exactly one noun phrase and
// one verb phrase, and captions are built from nothing else (plus "while" for
// in-scene composition and "and" for the concatenation arm).
struct Phrase {
  const char* noun;
  const char* verb;
};

Phrase phrase_of(dsp::EventType t);

// All words the grammar can ever emit, in a fixed deterministic order.
std::vector<std::string> lexicon_words();

constexpr const char* kConnective = "while";
constexpr const char* kConcatWord = "and";

struct SceneRecord {
  std::string id;
  std::string split;     // train | valid | test | bank
  std::string wav_path;  // relative to the run directory
  std::string caption;
  std::vector<dsp::EventSpec> events;

  std::vector<dsp::EventType> event_types() const;
  bool has_type(dsp::EventType t) const;
};

struct CorpusConfig {
  int train_scenes = 2000;
  int valid_scenes = 200;
  int test_scenes = 200;
  int bank_per_type = 6;  // >= 5
  int max_events = 3;
  double clip_duration_s = 4.0;
  int sample_rate = 16000;
};

struct CorpusManifest {
  CorpusConfig config;
  uint64_t seed = 0;
  std::vector<SceneRecord> records;  // train, valid, test, then bank

  std::vector<const SceneRecord*> split(const std::string& name) const;
};

// Caption grammar: events sorted by onset, "NP VP" clauses joined by "while".
std::string caption_of(const std::vector<dsp::EventSpec>& events);
std::string single_event_caption(dsp::EventType t);

// Deterministic corpus of multi-event scenes plus a single-event reference
// bank. Pure: no file IO here.
CorpusManifest generate_corpus(const CorpusConfig& cfg, uint64_t seed);

// Uniformly picks a bank record whose event type does not occur in the scene.
const SceneRecord& sample_reference(const CorpusManifest& manifest, const SceneRecord& scene,
                                    uint64_t seed);

// Sums the events of one record into a clip, with a joint peak guard.
dsp::Waveform render_record(const SceneRecord& rec, const CorpusConfig& cfg);

// JSONL, one record per line, byte-deterministic for a given manifest.
std::string manifest_to_jsonl(const CorpusManifest& manifest);
CorpusManifest manifest_from_jsonl(const std::string& text, const CorpusConfig& cfg);

}  // namespace audiodiff::scenegen
