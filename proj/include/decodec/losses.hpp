// Differentiable losses on the tape. The multi-scale mel loss here uses an
// explicit DFT-as-matmul path; the metric in signal.hpp uses an FFT. The two
// are implemented independently and agree to rounding, which the tests rely
// on as a dual-route check.

#pragma once

#include "decodec/signal.hpp"
#include "decodec/tensor.hpp"

#include <vector>

namespace decodec {

// Mean absolute difference between a tape tensor and a constant target.
Tensor l1_loss(const Tensor& a, const Eigen::MatrixXd& target);

struct MelScalePlan {
  int window = 0;
  int hop = 0;
  Eigen::MatrixXd dft_cos;  // window x bins
  Eigen::MatrixXd dft_sin;
  Eigen::MatrixXd fb_t;     // bins x bands
  Eigen::MatrixXd win_row;  // 1 x window Hann
};

struct MelLossPlan {
  std::vector<MelScalePlan> scales;
  int bands = kMelBands;
};

MelLossPlan make_mel_loss_plan(int sample_rate, const std::vector<int>& scales,
                               int bands);

// Log-mel frames of one scale on the tape.
Tensor log_mel_frames_diff(const Tensor& x, const MelScalePlan& plan);

// Mean over scales of the L1 distance between log-mel magnitudes of yhat
// (Tx1 on the tape) and a constant target waveform of the same length.
Tensor mel_loss(const Tensor& yhat, const Eigen::VectorXd& target,
                const MelLossPlan& plan);

// Value-only twin of mel_loss for metrics that must match the training
// objective bit-for-bit.
double mel_loss_value(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                      const MelLossPlan& plan);

}  // namespace decodec
