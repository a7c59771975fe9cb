#include "audiodiff/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <memory>

#include "audiodiff/errors.hpp"
#include "audiodiff/util.hpp"

namespace audiodiff::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Band {
  double lo, hi;
};

// per-type primary band; chirps use a second band for the end frequency
Band primary_band(EventType t) {
  switch (t) {
    case EventType::tone_low: return {80.0, 200.0};
    case EventType::tone_mid: return {300.0, 700.0};
    case EventType::tone_high: return {1200.0, 3000.0};
    case EventType::noise_white: return {0.0, 0.0};
    case EventType::noise_pink: return {0.0, 0.0};
    case EventType::chirp_up: return {150.0, 400.0};
    case EventType::chirp_down: return {1500.0, 3500.0};
    case EventType::pulses: return {400.0, 900.0};
    case EventType::am_tone: return {600.0, 1400.0};
    case EventType::click_train: return {2000.0, 3200.0};
  }
  return {0.0, 0.0};
}

Band secondary_band(EventType t) {
  switch (t) {
    case EventType::chirp_up: return {1500.0, 3500.0};
    case EventType::chirp_down: return {150.0, 400.0};
    case EventType::pulses: return {3.0, 7.0};       // gate rate Hz
    case EventType::am_tone: return {2.0, 6.0};      // modulation rate Hz
    case EventType::click_train: return {8.0, 16.0}; // click rate Hz
    default: return {0.0, 0.0};
  }
}

void normalize_rms(std::vector<float>& buf, size_t lo, size_t hi, double target) {
  double acc = 0.0;
  for (size_t i = lo; i < hi; ++i) acc += static_cast<double>(buf[i]) * buf[i];
  const double current = std::sqrt(acc / static_cast<double>(hi - lo));
  if (current <= 0.0) return;
  const float gain = static_cast<float>(target / current);
  for (size_t i = lo; i < hi; ++i) buf[i] *= gain;
}

}  // namespace

const char* event_type_name(EventType t) {
  switch (t) {
    case EventType::tone_low: return "tone_low";
    case EventType::tone_mid: return "tone_mid";
    case EventType::tone_high: return "tone_high";
    case EventType::noise_white: return "noise_white";
    case EventType::noise_pink: return "noise_pink";
    case EventType::chirp_up: return "chirp_up";
    case EventType::chirp_down: return "chirp_down";
    case EventType::pulses: return "pulses";
    case EventType::am_tone: return "am_tone";
    case EventType::click_train: return "click_train";
  }
  return "unknown";
}

EventType event_type_from_name(const std::string& name) {
  for (int i = 0; i < kEventTypeCount; ++i) {
    const EventType t = static_cast<EventType>(i);
    if (name == event_type_name(t)) return t;
  }
  throw ConfigError("unknown event type: " + name);
}

EventSpec EventSpec::from_seed(EventType type, double onset_s, double duration_s, uint64_t seed) {
  EventSpec s;
  s.type = type;
  s.onset_s = onset_s;
  s.duration_s = duration_s;
  s.seed = seed;
  util::Rng rng(util::derive_seed(seed, "event_params"));
  s.amplitude = rng.next_real(0.3, 0.8);
  const Band b1 = primary_band(type);
  s.freq_hz = b1.lo < b1.hi ? rng.next_real(b1.lo, b1.hi) : 0.0;
  const Band b2 = secondary_band(type);
  s.freq2_hz = b2.lo < b2.hi ? rng.next_real(b2.lo, b2.hi) : 0.0;
  return s;
}

Waveform synth_event(const EventSpec& spec, int sample_rate, double clip_duration_s) {
  if (sample_rate <= 0) throw std::invalid_argument("synth_event: bad sample rate");
  if (spec.amplitude <= 0.0 || spec.amplitude > 1.0)
    throw std::invalid_argument("synth_event: amplitude out of (0,1]");
  if (spec.onset_s < 0.0 || spec.duration_s <= 0.0 ||
      spec.onset_s + spec.duration_s > clip_duration_s + 1e-9)
    throw std::invalid_argument("synth_event: event exceeds clip bounds");

  const size_t n = static_cast<size_t>(std::llround(clip_duration_s * sample_rate));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0f);

  const size_t first = static_cast<size_t>(std::llround(spec.onset_s * sample_rate));
  size_t last = static_cast<size_t>(std::llround((spec.onset_s + spec.duration_s) * sample_rate));
  last = std::min(last, n);
  if (first >= last) return w;

  const double a = spec.amplitude;
  const double dur = spec.duration_s;
  util::Rng rng(util::derive_seed(spec.seed, "event_noise"));

  auto tau = [&](size_t i) { return static_cast<double>(i - first) / sample_rate; };

  switch (spec.type) {
    case EventType::tone_low:
    case EventType::tone_mid:
    case EventType::tone_high:
      for (size_t i = first; i < last; ++i)
        w.samples[i] = static_cast<float>(a * std::sin(2.0 * kPi * spec.freq_hz * tau(i)));
      break;
    case EventType::noise_white:
      for (size_t i = first; i < last; ++i)
        w.samples[i] = static_cast<float>(rng.next_real(-1.0, 1.0));
      normalize_rms(w.samples, first, last, a / 2.0);
      break;
    case EventType::noise_pink: {
      // Kellet-style three-pole 1/f approximation over white noise
      double b0 = 0, b1 = 0, b2 = 0;
      for (size_t i = first; i < last; ++i) {
        const double white = rng.next_real(-1.0, 1.0);
        b0 = 0.99765 * b0 + white * 0.0990460;
        b1 = 0.96300 * b1 + white * 0.2965164;
        b2 = 0.57000 * b2 + white * 1.0526913;
        w.samples[i] = static_cast<float>(b0 + b1 + b2 + white * 0.1848);
      }
      normalize_rms(w.samples, first, last, a / 2.0);
      break;
    }
    case EventType::chirp_up:
    case EventType::chirp_down:
      for (size_t i = first; i < last; ++i) {
        const double t = tau(i);
        const double phase = spec.freq_hz * t + (spec.freq2_hz - spec.freq_hz) / (2.0 * dur) * t * t;
        w.samples[i] = static_cast<float>(a * std::sin(2.0 * kPi * phase));
      }
      break;
    case EventType::pulses:
      for (size_t i = first; i < last; ++i) {
        const double t = tau(i);
        const bool gate = std::fmod(t * spec.freq2_hz, 1.0) < 0.3;
        w.samples[i] = gate ? static_cast<float>(a * std::sin(2.0 * kPi * spec.freq_hz * t)) : 0.0f;
      }
      break;
    case EventType::am_tone:
      for (size_t i = first; i < last; ++i) {
        const double t = tau(i);
        const double env = 0.1 + 0.9 * (0.5 + 0.5 * std::sin(2.0 * kPi * spec.freq2_hz * t));
        w.samples[i] = static_cast<float>(a * env * std::sin(2.0 * kPi * spec.freq_hz * t));
      }
      break;
    case EventType::click_train: {
      const double decay_s = 0.004;
      const double period = 1.0 / spec.freq2_hz;
      for (size_t i = first; i < last; ++i) {
        const double t = tau(i);
        const double since_click = std::fmod(t, period);
        w.samples[i] = static_cast<float>(
            a * std::sin(2.0 * kPi * spec.freq_hz * since_click) * std::exp(-since_click / decay_s));
      }
      break;
    }
  }

  // invariants demand |sample| <= 1; noise normalization can push a rare peak over
  float peak = 0.0f;
  for (size_t i = first; i < last; ++i) peak = std::max(peak, std::abs(w.samples[i]));
  if (peak > 0.99f) {
    const float gain = 0.99f / peak;
    for (size_t i = first; i < last; ++i) w.samples[i] *= gain;
  }
  return w;
}

double rms(const Waveform& w) {
  if (w.samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : w.samples) acc += static_cast<double>(s) * s;
  return std::sqrt(acc / static_cast<double>(w.samples.size()));
}

Waveform fit_length(const Waveform& w, size_t n) {
  Waveform out = w;
  out.samples.resize(n, 0.0f);
  return out;
}

MixResult mix_same_power(const Waveform& input, const Waveform& reference) {
  if (input.sample_rate != reference.sample_rate)
    throw std::invalid_argument("mix_same_power: sample-rate mismatch");
  if (input.samples.empty()) throw std::invalid_argument("mix_same_power: empty input");

  const Waveform ref = fit_length(reference, input.samples.size());
  const double ref_rms = rms(ref);
  if (ref_rms <= 0.0) throw std::invalid_argument("mix_same_power: silent reference");

  MixResult out;
  out.scale = rms(input) / ref_rms;
  out.mixed.sample_rate = input.sample_rate;
  out.mixed.samples.resize(input.samples.size());
  float peak = 0.0f;
  for (size_t i = 0; i < input.samples.size(); ++i) {
    const float v = input.samples[i] + static_cast<float>(out.scale) * ref.samples[i];
    out.mixed.samples[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 1.0f) {
    out.peak_gain = 1.0 / static_cast<double>(peak);
    const float g = static_cast<float>(out.peak_gain);
    for (auto& v : out.mixed.samples) v *= g;
    out.scale *= out.peak_gain;
  }
  return out;
}

namespace {

// iterative radix-2 FFT, in place
void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  int n_bins;             // fft/2 + 1
  std::vector<double> w;  // n_mels x n_bins, row-major

  MelFilterbank(int n_mels, int fft_size, int sample_rate) {
    n_bins = fft_size / 2 + 1;
    w.assign(static_cast<size_t>(n_mels) * n_bins, 0.0);
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
    for (int i = 0; i < n_mels + 2; ++i)
      edges[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
      const double lo = edges[static_cast<size_t>(m)];
      const double mid = edges[static_cast<size_t>(m) + 1];
      const double hi = edges[static_cast<size_t>(m) + 2];
      for (int k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / fft_size;
        double weight = 0.0;
        if (f > lo && f < mid)
          weight = (f - lo) / (mid - lo);
        else if (f >= mid && f < hi)
          weight = (hi - f) / (hi - mid);
        w[static_cast<size_t>(m) * n_bins + k] = weight;
      }
    }
  }
};

int window_samples(int sample_rate, const MelConfig& cfg) {
  return static_cast<int>(std::llround(cfg.window_ms * sample_rate / 1000.0));
}
int hop_samples(int sample_rate, const MelConfig& cfg) {
  return static_cast<int>(std::llround(cfg.hop_ms * sample_rate / 1000.0));
}

}  // namespace

int mel_frame_count(size_t n_samples, int sample_rate, const MelConfig& cfg) {
  const int win = window_samples(sample_rate, cfg);
  const int hop = hop_samples(sample_rate, cfg);
  if (static_cast<int>(n_samples) < win) return 0;
  return static_cast<int>((n_samples - static_cast<size_t>(win)) / static_cast<size_t>(hop)) + 1;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  if (cfg.n_mels < 1) throw std::invalid_argument("mel: n_mels must be >= 1");
  if (cfg.window_ms < cfg.hop_ms) throw std::invalid_argument("mel: window shorter than hop");
  const int win = window_samples(w.sample_rate, cfg);
  const int hop = hop_samples(w.sample_rate, cfg);
  if (win <= 0 || hop <= 0) throw std::invalid_argument("mel: empty window or hop");
  if (static_cast<int>(w.samples.size()) < win)
    throw std::invalid_argument("mel: clip shorter than one window");

  int fft_size = cfg.fft_size;
  if (fft_size == 0) {
    fft_size = 1;
    while (fft_size < win) fft_size <<= 1;
  }
  if (fft_size < win || (fft_size & (fft_size - 1)) != 0)
    throw std::invalid_argument("mel: fft_size must be a power of two covering the window");

  const int frames = mel_frame_count(w.samples.size(), w.sample_rate, cfg);
  static thread_local std::unique_ptr<MelFilterbank> bank;
  static thread_local int bank_mels = 0, bank_fft = 0, bank_rate = 0;
  if (!bank || bank_mels != cfg.n_mels || bank_fft != fft_size || bank_rate != w.sample_rate) {
    bank = std::make_unique<MelFilterbank>(cfg.n_mels, fft_size, w.sample_rate);
    bank_mels = cfg.n_mels;
    bank_fft = fft_size;
    bank_rate = w.sample_rate;
  }

  std::vector<double> hann(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i)
    hann[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / win);

  MelSpectrogram mel;
  mel.frames = frames;
  mel.bins = cfg.n_mels;
  mel.values.resize(static_cast<size_t>(frames) * cfg.n_mels);

  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_size));
  std::vector<double> power(static_cast<size_t>(bank->n_bins));
  const double lf = std::log(cfg.log_floor);

  for (int t = 0; t < frames; ++t) {
    const size_t off = static_cast<size_t>(t) * hop;
    for (int i = 0; i < win; ++i)
      buf[static_cast<size_t>(i)] = {w.samples[off + static_cast<size_t>(i)] * hann[static_cast<size_t>(i)], 0.0};
    std::fill(buf.begin() + win, buf.end(), std::complex<double>(0.0, 0.0));
    fft(buf);
    for (int k = 0; k < bank->n_bins; ++k) power[static_cast<size_t>(k)] = std::norm(buf[static_cast<size_t>(k)]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double* row = bank->w.data() + static_cast<size_t>(m) * bank->n_bins;
      double acc = 0.0;
      for (int k = 0; k < bank->n_bins; ++k) acc += row[k] * power[static_cast<size_t>(k)];
      mel.at(t, m) = static_cast<float>(acc > cfg.log_floor ? std::log(acc) : lf);
    }
  }
  return mel;
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);

  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  const uint32_t sample_rate = static_cast<uint32_t>(w.sample_rate);
  const uint32_t byte_rate = sample_rate * 2;

  auto put_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_u16 = [&](uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };

  f.write("RIFF", 4);
  put_u32(36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(sample_rate);
  put_u32(byte_rate);
  put_u16(2);   // block align
  put_u16(16);  // bits per sample
  f.write("data", 4);
  put_u32(data_bytes);

  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0f));
    f.write(reinterpret_cast<const char*>(&q), 2);
  }
  if (!f) throw IoError("short write: " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);

  char tag[4];
  uint32_t u32;
  uint16_t u16;
  auto get_u32 = [&]() {
    f.read(reinterpret_cast<char*>(&u32), 4);
    return u32;
  };
  auto get_u16 = [&]() {
    f.read(reinterpret_cast<char*>(&u16), 2);
    return u16;
  };

  f.read(tag, 4);
  if (!f || std::memcmp(tag, "RIFF", 4) != 0) throw IoError("not a RIFF file: " + path);
  get_u32();
  f.read(tag, 4);
  if (!f || std::memcmp(tag, "WAVE", 4) != 0) throw IoError("not a WAVE file: " + path);

  Waveform w;
  bool have_fmt = false;
  while (f.read(tag, 4)) {
    const uint32_t chunk = get_u32();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const uint16_t format = get_u16();
      const uint16_t channels = get_u16();
      const uint32_t rate = get_u32();
      get_u32();
      get_u16();
      const uint16_t bits = get_u16();
      if (format != 1 || channels != 1 || bits != 16)
        throw IoError("unsupported WAV encoding (want 16-bit PCM mono): " + path);
      w.sample_rate = static_cast<int>(rate);
      if (chunk > 16) f.seekg(chunk - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw IoError("data chunk before fmt: " + path);
      const size_t n = chunk / 2;
      w.samples.resize(n);
      std::vector<int16_t> raw(n);
      f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(chunk));
      if (!f) throw IoError("short read: " + path);
      for (size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(raw[i]) / 32767.0f;
      return w;
    } else {
      f.seekg(chunk, std::ios::cur);
    }
  }
  throw IoError("no data chunk: " + path);
}

}  // namespace audiodiff::dsp
