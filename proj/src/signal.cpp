#include "decodec/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace decodec {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT. Window lengths are powers of two by
// precondition, so this covers every analysis size without extra deps.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

double power(const Waveform& w) {
  if (w.length() == 0) return 0.0;
  return w.samples.squaredNorm() / static_cast<double>(w.length());
}

Waveform mix(const Waveform& s, const Waveform& n, double snr_db) {
  if (s.length() != n.length() || s.sample_rate != n.sample_rate)
    throw std::invalid_argument("mix: length or sample rate mismatch");
  const double ps = power(s);
  if (ps <= 0.0) throw std::invalid_argument("mix: speech has zero power");
  if (std::isinf(snr_db) && snr_db > 0) return s;
  const double pn = power(n);
  if (pn <= 0.0)
    throw std::invalid_argument("mix: background has zero power at finite SNR");
  const double alpha = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  Waveform y = s;
  y.samples += alpha * n.samples;
  return y;
}

double sdr(const Waveform& reference, const Waveform& estimate) {
  if (reference.length() != estimate.length())
    throw std::invalid_argument("sdr: length mismatch");
  constexpr double eps = 1e-12;
  const double ref_e = reference.samples.squaredNorm();
  const double err_e = (reference.samples - estimate.samples).squaredNorm();
  return 10.0 * std::log10((ref_e + eps) / (err_e + eps));
}

Eigen::VectorXd hann_window(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i)
    w(i) = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
  return w;
}

Spectrogram stft(const Waveform& x, int window_len, int hop) {
  if (!is_power_of_two(window_len))
    throw std::invalid_argument("stft: window length must be a power of two");
  if (hop <= 0 || hop > window_len)
    throw std::invalid_argument("stft: hop must be in [1, window_len]");
  if (x.length() < window_len)
    throw std::invalid_argument("stft: signal shorter than one window");

  const Eigen::Index n_frames = 1 + (x.length() - window_len) / hop;
  const int bins = window_len / 2 + 1;
  const Eigen::VectorXd win = hann_window(window_len);
  Spectrogram spec(n_frames, bins);
  std::vector<std::complex<double>> buf(window_len);
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    for (int i = 0; i < window_len; ++i)
      buf[i] = std::complex<double>(x.samples(f * hop + i) * win(i), 0.0);
    fft_radix2(buf);
    for (int k = 0; k < bins; ++k) spec(f, k) = buf[k];
  }
  return spec;
}

Eigen::MatrixXd mel_filterbank(int bands, int window_len, double sample_rate) {
  const int bins = window_len / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  Eigen::VectorXd centers(bands + 2);
  for (int i = 0; i < bands + 2; ++i)
    centers(i) = mel_to_hz(mel_max * i / (bands + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(bands, bins);
  for (int b = 0; b < bands; ++b) {
    const double lo = centers(b), mid = centers(b + 1), hi = centers(b + 2);
    for (int k = 0; k < bins; ++k) {
      const double f = k * sample_rate / window_len;
      double v = 0.0;
      if (f > lo && f < mid) v = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) v = (hi - f) / (hi - mid);
      fb(b, k) = v;
    }
    const double area = fb.row(b).sum();
    if (area > 0.0) fb.row(b) /= area;
  }
  return fb;
}

Eigen::MatrixXd log_mel_frames(const Waveform& x, int window_len, int hop,
                               int bands) {
  const Spectrogram spec = stft(x, window_len, hop);
  const Eigen::MatrixXd fb = mel_filterbank(bands, window_len, x.sample_rate);
  Eigen::MatrixXd mag(spec.rows(), spec.cols());
  for (Eigen::Index f = 0; f < spec.rows(); ++f)
    for (Eigen::Index k = 0; k < spec.cols(); ++k)
      mag(f, k) = std::sqrt(std::norm(spec(f, k)) + kMagnitudeEps);
  Eigen::MatrixXd mel = mag * fb.transpose();
  return mel.cwiseMax(kMelFloor).array().log().matrix();
}

double mel_distance(const Waveform& a, const Waveform& b,
                    const std::vector<int>& scales, int bands) {
  if (a.length() != b.length())
    throw std::invalid_argument("mel_distance: length mismatch");
  if (scales.empty()) throw std::invalid_argument("mel_distance: no scales");
  double total = 0.0;
  for (int win : scales) {
    const Eigen::MatrixXd la = log_mel_frames(a, win, win / 4, bands);
    const Eigen::MatrixXd lb = log_mel_frames(b, win, win / 4, bands);
    total += (la - lb).cwiseAbs().mean();
  }
  return total / static_cast<double>(scales.size());
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& f, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(std::istream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& f) {
  unsigned char b[2];
  f.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(w.length());
  const std::uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(f, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(f, 2);
  put_u16(f, 16);
  f.write("data", 4);
  put_u32(f, data_bytes);
  for (Eigen::Index i = 0; i < w.length(); ++i) {
    double v = std::clamp(w.samples(i), -1.0, 1.0);
    const std::int16_t q = static_cast<std::int16_t>(std::lrint(v * 32767.0));
    put_u16(f, static_cast<std::uint16_t>(q));
  }
  if (!f) throw std::runtime_error("write_wav: write failed for " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_wav: cannot open " + path);
  char tag[5] = {0};
  f.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF file: " + path);
  get_u32(f);
  f.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a WAVE file: " + path);

  Waveform w;
  bool got_fmt = false;
  while (f.read(tag, 4)) {
    const std::uint32_t chunk = get_u32(f);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t format = get_u16(f);
      const std::uint16_t channels = get_u16(f);
      w.sample_rate = static_cast<int>(get_u32(f));
      get_u32(f);
      get_u16(f);
      const std::uint16_t bits = get_u16(f);
      if (format != 1 || channels != 1 || bits != 16)
        throw std::runtime_error("read_wav: only 16-bit PCM mono supported");
      if (chunk > 16) f.seekg(chunk - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw std::runtime_error("read_wav: data before fmt");
      const std::uint32_t n = chunk / 2;
      w.samples.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::int16_t q = static_cast<std::int16_t>(get_u16(f));
        w.samples(i) = static_cast<double>(q) / 32767.0;
      }
      if (!f) throw std::runtime_error("read_wav: truncated data chunk");
      return w;
    } else {
      f.seekg(chunk + (chunk & 1), std::ios::cur);
    }
  }
  throw std::runtime_error("read_wav: no data chunk in " + path);
}

}  // namespace decodec
