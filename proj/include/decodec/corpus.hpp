// Synthetic speech and background generators. Utterances are harmonic
// sources: a speaker-specific F0 base and formant-like filter, modulated by
// a per-frame-group content symbol drawn from a small alphabet of distinct
// spectral envelopes. Backgrounds are non-harmonic textures at unit power.
// Everything is deterministic under its seed.

#pragma once

#include "decodec/signal.hpp"

#include <cstdint>
#include <vector>

namespace decodec {

struct CorpusConfig {
  int sample_rate = 16000;
  int samples_per_frame = 320;  // codec hop: product of encoder strides
  int n_symbols = 8;
  int frames_per_symbol = 4;  // content changes once per frame group
  int n_speakers = 32;
};

// 4 kHz profile for fast tests and desk training runs.
CorpusConfig fast_corpus_config();

struct SyntheticUtterance {
  Waveform waveform;
  std::vector<int> content_track;  // one symbol id per codec frame
  int speaker_id = 0;
  std::vector<double> f0_track;  // Hz per codec frame
};

enum class BackgroundKind { kFilteredNoise, kChirp, kToneBurst };

// Speaker F0 base in [90, 300] Hz, a pure function of the speaker id.
double speaker_f0_base(const CorpusConfig& cfg, int speaker_id);

// Designed spectral centroid of symbol k's envelope (dense-grid quadrature
// over the envelope alone; the oracle for generated-audio centroid checks).
double symbol_envelope_centroid(const CorpusConfig& cfg, int symbol);

// Envelope value of symbol k at frequency f (Hz).
double symbol_envelope(const CorpusConfig& cfg, int symbol, double f);

SyntheticUtterance generate_utterance_for_speaker(const CorpusConfig& cfg,
                                                  int speaker_id,
                                                  std::uint64_t content_seed,
                                                  double duration_s);

// Speaker chosen from the seed; duration >= 0.5 s.
SyntheticUtterance generate_utterance(const CorpusConfig& cfg,
                                      std::uint64_t seed, double duration_s);

Waveform generate_background(const CorpusConfig& cfg, std::uint64_t seed,
                             double duration_s, BackgroundKind kind);

// Kind chosen from the seed (noise weighted heavier than chirp/burst).
Waveform generate_background(const CorpusConfig& cfg, std::uint64_t seed,
                             double duration_s);

}  // namespace decodec
