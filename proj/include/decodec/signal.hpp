// Waveform container, STFT / mel analysis, SDR metric and SNR-controlled
// mixing. Analysis here is plain (non-differentiable) and used for metrics
// and tests; the differentiable mel loss lives in losses.hpp and is checked
// against this path.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <limits>
#include <string>
#include <vector>

namespace decodec {

struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = 0;

  Eigen::Index length() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Mean-square power.
double power(const Waveform& w);

// s + alpha*n with alpha chosen so the s-to-alpha*n power ratio is snr_db.
// snr_db = +infinity returns s unchanged.
Waveform mix(const Waveform& s, const Waveform& n, double snr_db);

// 10*log10((|ref|^2 + eps) / (|ref - est|^2 + eps)), eps = 1e-12.
double sdr(const Waveform& reference, const Waveform& estimate);

// Hann-windowed complex spectrogram, frames x (window/2 + 1).
// window_len must be a power of two; hop <= window_len.
using Spectrogram =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;
Spectrogram stft(const Waveform& x, int window_len, int hop);

// Periodic Hann window of length n.
Eigen::VectorXd hann_window(int n);

// Triangular mel filterbank, area-normalized, bands x (window/2 + 1).
Eigen::MatrixXd mel_filterbank(int bands, int window_len, double sample_rate);

// Frames x bands log-mel magnitudes of one scale: log(max(M |X|, 1e-5))
// where |X| = sqrt(re^2 + im^2 + 1e-12).
Eigen::MatrixXd log_mel_frames(const Waveform& x, int window_len, int hop,
                               int bands);

constexpr int kMelBands = 64;
constexpr double kMelFloor = 1e-5;
constexpr double kMagnitudeEps = 1e-12;

// Mean over scales of the L1 distance between log-mel magnitudes.
// hop is window/4 per scale.
double mel_distance(const Waveform& a, const Waveform& b,
                    const std::vector<int>& scales, int bands = kMelBands);

// 16-bit PCM mono WAV (little-endian RIFF), the only audio format.
void write_wav(const std::string& path, const Waveform& w);
Waveform read_wav(const std::string& path);

}  // namespace decodec
