#include "audiodiff/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "audiodiff/errors.hpp"
#include "audiodiff/util.hpp"

namespace audiodiff::scenegen {

using dsp::EventSpec;
using dsp::EventType;
using json = nlohmann::ordered_json;

Phrase phrase_of(EventType t) {
  switch (t) {
    case EventType::tone_low: return {"a low tone", "hums"};
    case EventType::tone_mid: return {"a middle tone", "drones"};
    case EventType::tone_high: return {"a high tone", "rings"};
    case EventType::noise_white: return {"white noise", "hisses"};
    case EventType::noise_pink: return {"pink noise", "rushes"};
    case EventType::chirp_up: return {"a rising sweep", "whistles"};
    case EventType::chirp_down: return {"a falling sweep", "dives"};
    case EventType::pulses: return {"a pulse train", "beats"};
    case EventType::am_tone: return {"a wavering tone", "warbles"};
    case EventType::click_train: return {"a click series", "ticks"};
  }
  return {"", ""};
}

std::vector<std::string> lexicon_words() {
  std::vector<std::string> words;
  auto push_unique = [&](const std::string& w) {
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  };
  auto push_phrase = [&](const char* text) {
    std::istringstream in(text);
    std::string w;
    while (in >> w) push_unique(w);
  };
  for (int i = 0; i < dsp::kEventTypeCount; ++i) {
    const Phrase p = phrase_of(static_cast<EventType>(i));
    push_phrase(p.noun);
    push_phrase(p.verb);
  }
  push_unique(kConnective);
  push_unique(kConcatWord);
  return words;
}

std::vector<EventType> SceneRecord::event_types() const {
  std::vector<EventType> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.type);
  return out;
}

bool SceneRecord::has_type(EventType t) const {
  for (const auto& e : events)
    if (e.type == t) return true;
  return false;
}

std::vector<const SceneRecord*> CorpusManifest::split(const std::string& name) const {
  std::vector<const SceneRecord*> out;
  for (const auto& r : records)
    if (r.split == name) out.push_back(&r);
  return out;
}

std::string caption_of(const std::vector<EventSpec>& events) {
  std::vector<const EventSpec*> ordered;
  ordered.reserve(events.size());
  for (const auto& e : events) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const EventSpec* a, const EventSpec* b) {
    if (a->onset_s != b->onset_s) return a->onset_s < b->onset_s;
    return static_cast<int>(a->type) < static_cast<int>(b->type);
  });
  std::string caption;
  for (size_t i = 0; i < ordered.size(); ++i) {
    const Phrase p = phrase_of(ordered[i]->type);
    if (i > 0) {
      caption += ' ';
      caption += kConnective;
      caption += ' ';
    }
    caption += p.noun;
    caption += ' ';
    caption += p.verb;
  }
  return caption;
}

std::string single_event_caption(EventType t) {
  const Phrase p = phrase_of(t);
  return std::string(p.noun) + ' ' + p.verb;
}

namespace {

void validate(const CorpusConfig& cfg) {
  if (cfg.train_scenes < 1 || cfg.valid_scenes < 1 || cfg.test_scenes < 1)
    throw ConfigError("corpus: split sizes must be >= 1");
  if (cfg.bank_per_type < 5) throw ConfigError("corpus: bank needs >= 5 instances per type");
  if (cfg.max_events < 1 || cfg.max_events > dsp::kEventTypeCount)
    throw ConfigError("corpus: max_events out of range");
  if (cfg.clip_duration_s < 0.5) throw ConfigError("corpus: clip too short");
  if (cfg.sample_rate <= 0) throw ConfigError("corpus: bad sample rate");
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

SceneRecord make_scene(const CorpusConfig& cfg, const std::string& split, int index,
                       uint64_t corpus_seed) {
  util::Rng rng(util::derive_seed(corpus_seed, "scene/" + split, static_cast<uint64_t>(index)));
  SceneRecord rec;
  rec.id = split + "_" + zero_pad(index, 5);
  rec.split = split;
  rec.wav_path = "wavs/" + rec.id + ".wav";

  const int n_events = rng.next_int(1, cfg.max_events);
  std::vector<EventType> types;
  for (int i = 0; i < dsp::kEventTypeCount; ++i) types.push_back(static_cast<EventType>(i));
  rng.shuffle(types);
  types.resize(static_cast<size_t>(n_events));

  for (EventType t : types) {
    const double duration = rng.next_real(0.25 * cfg.clip_duration_s, 0.625 * cfg.clip_duration_s);
    const double onset = rng.next_real(0.0, cfg.clip_duration_s - duration);
    rec.events.push_back(EventSpec::from_seed(t, onset, duration, rng.next_u64()));
  }
  rec.caption = caption_of(rec.events);
  return rec;
}

SceneRecord make_bank_entry(const CorpusConfig& cfg, EventType t, int index, uint64_t corpus_seed) {
  util::Rng rng(util::derive_seed(corpus_seed, std::string("bank/") + dsp::event_type_name(t),
                                  static_cast<uint64_t>(index)));
  SceneRecord rec;
  rec.id = std::string("bank_") + dsp::event_type_name(t) + "_" + zero_pad(index, 2);
  rec.split = "bank";
  rec.wav_path = "wavs/" + rec.id + ".wav";
  const double duration = rng.next_real(0.625 * cfg.clip_duration_s, 0.875 * cfg.clip_duration_s);
  const double onset = rng.next_real(0.0, cfg.clip_duration_s - duration);
  rec.events.push_back(EventSpec::from_seed(t, onset, duration, rng.next_u64()));
  rec.caption = caption_of(rec.events);
  return rec;
}

}  // namespace

CorpusManifest generate_corpus(const CorpusConfig& cfg, uint64_t seed) {
  validate(cfg);
  CorpusManifest m;
  m.config = cfg;
  m.seed = seed;
  for (int i = 0; i < cfg.train_scenes; ++i) m.records.push_back(make_scene(cfg, "train", i, seed));
  for (int i = 0; i < cfg.valid_scenes; ++i) m.records.push_back(make_scene(cfg, "valid", i, seed));
  for (int i = 0; i < cfg.test_scenes; ++i) m.records.push_back(make_scene(cfg, "test", i, seed));
  for (int t = 0; t < dsp::kEventTypeCount; ++t)
    for (int i = 0; i < cfg.bank_per_type; ++i)
      m.records.push_back(make_bank_entry(cfg, static_cast<EventType>(t), i, seed));
  return m;
}

const SceneRecord& sample_reference(const CorpusManifest& manifest, const SceneRecord& scene,
                                    uint64_t seed) {
  std::vector<const SceneRecord*> admissible;
  for (const auto& r : manifest.records) {
    if (r.split != "bank") continue;
    if (scene.has_type(r.events.front().type)) continue;
    admissible.push_back(&r);
  }
  if (admissible.empty())
    throw std::invalid_argument("sample_reference: no admissible reference type for " + scene.id);
  util::Rng rng(seed);
  return *admissible[static_cast<size_t>(rng.next_below(admissible.size()))];
}

dsp::Waveform render_record(const SceneRecord& rec, const CorpusConfig& cfg) {
  dsp::Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.assign(static_cast<size_t>(std::llround(cfg.clip_duration_s * cfg.sample_rate)), 0.0f);
  for (const auto& e : rec.events) {
    const dsp::Waveform ev = dsp::synth_event(e, cfg.sample_rate, cfg.clip_duration_s);
    for (size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += ev.samples[i];
  }
  float peak = 0.0f;
  for (float s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.99f) {
    const float gain = 0.99f / peak;
    for (auto& s : out.samples) s *= gain;
  }
  return out;
}

std::string manifest_to_jsonl(const CorpusManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    json rec;
    rec["id"] = r.id;
    rec["split"] = r.split;
    rec["wav_path"] = r.wav_path;
    rec["caption"] = r.caption;
    json events = json::array();
    for (const auto& e : r.events) {
      json ev;
      ev["type"] = dsp::event_type_name(e.type);
      ev["onset_s"] = e.onset_s;
      ev["duration_s"] = e.duration_s;
      ev["seed"] = e.seed;
      events.push_back(std::move(ev));
    }
    rec["events"] = std::move(events);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

CorpusManifest manifest_from_jsonl(const std::string& text, const CorpusConfig& cfg) {
  CorpusManifest m;
  m.config = cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    SceneRecord r;
    r.id = rec.at("id").get<std::string>();
    r.split = rec.at("split").get<std::string>();
    r.wav_path = rec.at("wav_path").get<std::string>();
    r.caption = rec.at("caption").get<std::string>();
    for (const auto& ev : rec.at("events")) {
      r.events.push_back(EventSpec::from_seed(
          dsp::event_type_from_name(ev.at("type").get<std::string>()),
          ev.at("onset_s").get<double>(), ev.at("duration_s").get<double>(),
          ev.at("seed").get<uint64_t>()));
    }
    if (!seen_ids.insert(r.id).second) throw IoError("manifest: duplicate id " + r.id);
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace audiodiff::scenegen
