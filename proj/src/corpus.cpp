#include "decodec/corpus.hpp"

#include "decodec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace decodec {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hash01(std::uint64_t x) {
  return static_cast<double>(Rng::mix(x, 0) >> 11) * 0x1.0p-53;
}

// Gentle speaker coloration: a tilt plus one broad resonance. Kept mild so
// symbol envelopes dominate the spectral centroid.
double speaker_filter(const CorpusConfig& cfg, int speaker_id, double f) {
  const double nyq = cfg.sample_rate / 2.0;
  const double tilt = 0.3 * (hash01(0x5eab0000ULL + speaker_id) - 0.5);
  const double res_f = nyq * (0.25 + 0.4 * hash01(0x5eab1111ULL + speaker_id));
  const double res_w = nyq * 0.25;
  const double res = 0.15 * std::exp(-0.5 * std::pow((f - res_f) / res_w, 2.0));
  return 1.0 + tilt * (f - nyq / 2.0) / (nyq / 2.0) + res;
}

}  // namespace

CorpusConfig fast_corpus_config() {
  CorpusConfig cfg;
  cfg.sample_rate = 4000;
  cfg.samples_per_frame = 40;  // strides [2, 4, 5]
  return cfg;
}

double speaker_f0_base(const CorpusConfig& /*cfg*/, int speaker_id) {
  return 90.0 + 210.0 * hash01(0xf0ba5eULL + speaker_id);
}

double symbol_envelope_centroid(const CorpusConfig& cfg, int symbol) {
  const double nyq = cfg.sample_rate / 2.0;
  const int grid = 4096;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double f = nyq * (i + 0.5) / grid;
    const double e = symbol_envelope(cfg, symbol, f);
    num += f * e;
    den += e;
  }
  return num / den;
}

double symbol_envelope(const CorpusConfig& cfg, int symbol, double f) {
  if (symbol < 0 || symbol >= cfg.n_symbols)
    throw std::invalid_argument("symbol_envelope: symbol out of range");
  const double nyq = cfg.sample_rate / 2.0;
  // Geometrically spaced Gaussian bumps between 0.25 and 0.75 Nyquist.
  const double lo = 0.25 * nyq, hi = 0.75 * nyq;
  const double t = cfg.n_symbols > 1
                       ? static_cast<double>(symbol) / (cfg.n_symbols - 1)
                       : 0.5;
  const double center = lo * std::pow(hi / lo, t);
  const double sigma = center / 3.0;
  return std::exp(-0.5 * std::pow((f - center) / sigma, 2.0));
}

SyntheticUtterance generate_utterance_for_speaker(const CorpusConfig& cfg,
                                                  int speaker_id,
                                                  std::uint64_t content_seed,
                                                  double duration_s) {
  if (duration_s < 0.5)
    throw std::invalid_argument("generate_utterance: duration must be >= 0.5 s");
  Rng rng(Rng::mix(content_seed, 0xc0de));

  const int spf = cfg.samples_per_frame;
  const int n_frames = std::max(
      1, static_cast<int>(std::lround(duration_s * cfg.sample_rate / spf)));
  const int n_samples = n_frames * spf;

  SyntheticUtterance utt;
  utt.speaker_id = speaker_id;
  utt.content_track.resize(n_frames);
  utt.f0_track.resize(n_frames);
  utt.waveform.sample_rate = cfg.sample_rate;
  utt.waveform.samples = Eigen::VectorXd::Zero(n_samples);

  const double f0_base = speaker_f0_base(cfg, speaker_id);
  const double contour_rate = rng.uniform(0.5, 2.0);   // Hz
  const double contour_phase = rng.uniform(0.0, 2.0 * kPi);

  for (int f = 0; f < n_frames; ++f) {
    if (f % cfg.frames_per_symbol == 0) {
      const int sym = static_cast<int>(rng.uniform_int(cfg.n_symbols));
      for (int g = f; g < std::min(f + cfg.frames_per_symbol, n_frames); ++g)
        utt.content_track[g] = sym;
    }
    const double tsec = static_cast<double>(f) * spf / cfg.sample_rate;
    utt.f0_track[f] =
        f0_base *
        (1.0 + 0.04 * std::sin(2.0 * kPi * contour_rate * tsec + contour_phase));
  }

  const double nyq = cfg.sample_rate / 2.0;
  const int max_harmonics = static_cast<int>(nyq / 90.0);
  // Per-frame harmonic amplitudes, linearly interpolated per sample.
  Eigen::MatrixXd amps(n_frames, max_harmonics);
  for (int f = 0; f < n_frames; ++f) {
    for (int h = 1; h <= max_harmonics; ++h) {
      const double freq = h * utt.f0_track[f];
      amps(f, h - 1) = freq < nyq * 0.95
                           ? symbol_envelope(cfg, utt.content_track[f], freq) *
                                 speaker_filter(cfg, speaker_id, freq)
                           : 0.0;
    }
  }

  double phase = rng.uniform(0.0, 2.0 * kPi);
  for (int i = 0; i < n_samples; ++i) {
    const int f = i / spf;
    const double frac = static_cast<double>(i - f * spf) / spf;
    const int fn = std::min(f + 1, n_frames - 1);
    const double f0 = (1.0 - frac) * utt.f0_track[f] + frac * utt.f0_track[fn];
    phase += 2.0 * kPi * f0 / cfg.sample_rate;
    double x = 0.0;
    for (int h = 1; h <= max_harmonics; ++h) {
      const double a = (1.0 - frac) * amps(f, h - 1) + frac * amps(fn, h - 1);
      if (a == 0.0) continue;
      x += a * std::sin(h * phase);
    }
    utt.waveform.samples(i) = x;
  }

  const double peak = utt.waveform.samples.cwiseAbs().maxCoeff();
  if (peak > 0.0) utt.waveform.samples *= 0.9 / peak;
  return utt;
}

SyntheticUtterance generate_utterance(const CorpusConfig& cfg,
                                      std::uint64_t seed, double duration_s) {
  const int speaker =
      static_cast<int>(Rng::mix(seed, 0x57eace8ULL) % cfg.n_speakers);
  return generate_utterance_for_speaker(cfg, speaker, Rng::mix(seed, 0xc027e27ULL),
                                        duration_s);
}

namespace {

Waveform make_background(const CorpusConfig& cfg, std::uint64_t seed,
                         double duration_s, BackgroundKind kind) {
  Rng rng(Rng::mix(seed, 0xb9));
  const int spf = cfg.samples_per_frame;
  const int n_frames = std::max(
      1, static_cast<int>(std::lround(duration_s * cfg.sample_rate / spf)));
  const int n = n_frames * spf;
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples = Eigen::VectorXd::Zero(n);
  const double nyq = cfg.sample_rate / 2.0;

  switch (kind) {
    case BackgroundKind::kFilteredNoise: {
      // White noise through a wide one-pole band: decorrelates well before
      // one pitch period.
      const double f_lo = rng.uniform(0.02, 0.06) * cfg.sample_rate;
      const double f_hi = rng.uniform(0.30, 0.45) * cfg.sample_rate;
      const double a_lp = std::exp(-2.0 * kPi * f_hi / cfg.sample_rate);
      const double a_hp = std::exp(-2.0 * kPi * f_lo / cfg.sample_rate);
      double lp = 0.0, hp_prev_in = 0.0, hp = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        lp = (1.0 - a_lp) * x + a_lp * lp;
        hp = a_hp * (hp + lp - hp_prev_in);
        hp_prev_in = lp;
        w.samples(i) = hp;
      }
      break;
    }
    case BackgroundKind::kChirp: {
      const double f1 = rng.uniform(0.05, 0.2) * cfg.sample_rate;
      const double f2 = rng.uniform(0.25, 0.45) * cfg.sample_rate;
      double phase = rng.uniform(0.0, 2.0 * kPi);
      for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / n;
        const double f = f1 + (f2 - f1) * t;
        phase += 2.0 * kPi * f / cfg.sample_rate;
        w.samples(i) = std::sin(phase);
      }
      break;
    }
    case BackgroundKind::kToneBurst: {
      const double tone = rng.uniform(0.15, 0.4) * cfg.sample_rate;
      const double rate = rng.uniform(2.0, 6.0);  // bursts per second
      const double phase0 = rng.uniform(0.0, 2.0 * kPi);
      double phase = rng.uniform(0.0, 2.0 * kPi);
      for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate;
        const double gate =
            0.5 * (1.0 + std::tanh(6.0 * std::sin(2.0 * kPi * rate * t + phase0)));
        phase += 2.0 * kPi * tone / cfg.sample_rate;
        w.samples(i) = gate * std::sin(phase);
      }
      break;
    }
  }
  (void)nyq;

  const double p = power(w);
  if (p > 0.0) w.samples /= std::sqrt(p);
  return w;
}

}  // namespace

Waveform generate_background(const CorpusConfig& cfg, std::uint64_t seed,
                             double duration_s, BackgroundKind kind) {
  return make_background(cfg, seed, duration_s, kind);
}

Waveform generate_background(const CorpusConfig& cfg, std::uint64_t seed,
                             double duration_s) {
  const std::uint64_t r = Rng::mix(seed, 0x6b12d) % 4;
  const BackgroundKind kind = r < 2 ? BackgroundKind::kFilteredNoise
                              : r == 2 ? BackgroundKind::kChirp
                                       : BackgroundKind::kToneBurst;
  return make_background(cfg, seed, duration_s, kind);
}

}  // namespace decodec
