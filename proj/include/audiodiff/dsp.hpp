#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace audiodiff::dsp {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Signal kinds for the synthetic event bank. The caption lexicon for these
// lives in scenegen; here they only select a synthesis recipe.
enum class EventType {
  tone_low,
  tone_mid,
  tone_high,
  noise_white,
  noise_pink,
  chirp_up,
  chirp_down,
  pulses,
  am_tone,
  click_train,
};

constexpr int kEventTypeCount = 10;

const char* event_type_name(EventType t);
EventType event_type_from_name(const std::string& name);

struct EventSpec {
  EventType type = EventType::tone_low;
  double onset_s = 0.0;
  double duration_s = 1.0;
  uint64_t seed = 0;
  // band parameters; filled by derive() from (type, seed) unless set explicitly
  double amplitude = 0.5;
  double freq_hz = 440.0;
  double freq2_hz = 0.0;  // chirp end frequency / modulation rate, per type

  // Deterministically derives amplitude and band parameters from (type, seed),
  // so a (type, onset, duration, seed) manifest record resynthesizes exactly.
  static EventSpec from_seed(EventType type, double onset_s, double duration_s, uint64_t seed);
};

struct MelConfig {
  double window_ms = 40.0;
  double hop_ms = 20.0;
  int n_mels = 64;
  int fft_size = 0;  // 0 = smallest power of two covering the window
  double log_floor = 1e-10;
};

struct MelSpectrogram {
  int frames = 0;  // T
  int bins = 0;    // F
  std::vector<float> values;  // row-major T x F, natural-log power

  float& at(int t, int f) { return values[static_cast<size_t>(t) * bins + f]; }
  const float& at(int t, int f) const { return values[static_cast<size_t>(t) * bins + f]; }
};

struct MixResult {
  Waveform mixed;
  double scale = 1.0;      // reference gain before the peak guard
  double peak_gain = 1.0;  // joint renormalization applied when |mixed| peaked over 1
};

Waveform synth_event(const EventSpec& spec, int sample_rate, double clip_duration_s);

double rms(const Waveform& w);

// Pads with zeros or truncates to exactly n samples.
Waveform fit_length(const Waveform& w, size_t n);

// Scales the reference to the input's RMS, adds in the time domain, and, if
// the sum peaks above 1, renormalizes signal and bookkept scale together so
// mixing stays linear.
MixResult mix_same_power(const Waveform& input, const Waveform& reference);

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg);

int mel_frame_count(size_t n_samples, int sample_rate, const MelConfig& cfg);

// 16-bit PCM mono little-endian RIFF.
void write_wav(const std::string& path, const Waveform& w);
Waveform read_wav(const std::string& path);

}  // namespace audiodiff::dsp
