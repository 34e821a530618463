// End-to-end model: encoder -> SOP -> parallel RVQs -> decoder, plus the
// token-bundle form used by files and the task engine.

#pragma once

#include "decodec/layers.hpp"
#include "decodec/rvq.hpp"
#include "decodec/signal.hpp"
#include "decodec/sop.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace decodec {

struct LossWeights {
  double w_rst = 500.0;
  double w_sg = 150.0;
  double w_perp = 10.0;
  double w_recon = 10.0;
  double w_codebook = 1.0;
  double w_commit = 10.0;
  double w_disc = 1.0;  // retained for a future adversarial term; unused
};

struct ModelConfig {
  int sample_rate = 16000;
  std::vector<int> strides = {2, 4, 5, 8};
  int stem_channels = 16;  // C
  int embed_dim = 64;      // D
  int kernel = 7;          // K
  int decoder_dim = 96;
  int k_s = 4;
  int k_n = 4;
  int codebook_size = 64;
  bool causal = true;
  LossWeights loss_weights;
  std::uint64_t seed = 1;
  int teacher_dim = 16;
  std::vector<int> mel_scales = {512, 1024, 2048};
  int mel_bands = 64;

  int hop() const {
    int h = 1;
    for (int s : strides) h *= s;
    return h;
  }
  // sample_rate / product(strides); must divide exactly.
  int frame_rate() const;
  double bits_per_second(int stages) const {
    return frame_rate() * stages * std::log2(static_cast<double>(codebook_size));
  }

  void validate() const;
};

// Paper-scale topology (for arithmetic checks; not a training target).
ModelConfig paper_scale_config();
// 4 kHz profile used by tests and desk training runs.
ModelConfig fast_config();
// Tiny model for gradient checks: D=16, two quantizer stages.
ModelConfig toy_config();

struct TokenBundle {
  Eigen::MatrixXi zc;  // frames x 1
  Eigen::MatrixXi zr;  // frames x (K_s - 1)
  Eigen::MatrixXi zb;  // frames x K_n
  std::uint64_t config_fingerprint = 0;

  Eigen::Index frames() const { return zc.rows(); }
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

struct ConvLayer {
  Tensor w;  // (Cin*K) x Cout
  Tensor b;  // 1 x Cout
  int kernel = 0;
  int stride = 1;
};

struct Encoder {
  ConvLayer stem;
  std::vector<ConvLayer> block_pre;   // stride-1 conv per block
  std::vector<ConvLayer> block_down;  // strided conv per block
  std::vector<LstmCell<double>> fw;   // two layers
  std::vector<LstmCell<double>> bw;   // only used when non-causal
  ConvLayer head;
  bool causal = true;

  Tensor forward(const Tensor& x) const;
};

struct Decoder {
  ConvLayer stem;
  std::vector<ConvLayer> block_up;    // transposed strided conv per block
  std::vector<ConvLayer> block_post;  // stride-1 conv per block
  ConvLayer head;
  bool causal = true;

  Tensor forward(const Tensor& z) const;
};

struct EncodeResult {
  Eigen::MatrixXd y;  // frames x D
  Eigen::MatrixXd s;
  Eigen::MatrixXd n;
  TokenBundle tokens;
  Eigen::MatrixXd zs;  // quantized speech branch
  Eigen::MatrixXd zn;  // quantized background branch
  Eigen::Index original_samples = 0;
};

class DecodecModel {
 public:
  explicit DecodecModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // Inference: pad, encode, project, quantize. Deterministic.
  EncodeResult encode(const Waveform& x) const;

  // Decoder consumes the sum Zs + Zn; output cropped to target_samples when
  // non-negative, otherwise frames * hop.
  Waveform decode(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zn,
                  Eigen::Index target_samples = -1) const;

  // Codebook lookups summed per branch; refuses foreign bundles.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> detokenize(
      const TokenBundle& tb) const;

  TokenBundle blank_bundle(Eigen::Index frames) const;

  // Tape-building passes used by training.
  Tensor encoder_forward(const Tensor& x) const { return encoder.forward(x); }
  Tensor decoder_forward(const Tensor& z) const { return decoder.forward(z); }

  // Fixed enumeration order; names are unique.
  std::vector<Parameter> parameters();

  // Hash of the configuration and every parameter byte; stored in token
  // files so tokens cannot be decoded against a different model.
  std::uint64_t fingerprint() const;

  Encoder encoder;
  Decoder decoder;
  ProjectionPair sop;
  RvqStack srvq;
  RvqStack nrvq;
  SgHead sg_head;

 private:
  ModelConfig cfg_;
};

// Right-pad with zeros to a multiple of the hop.
Eigen::VectorXd pad_to_hop(const Eigen::VectorXd& x, int hop);

std::string serialize_config(const ModelConfig& cfg);

}  // namespace decodec
