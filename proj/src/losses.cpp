#include "decodec/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace decodec {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Tensor l1_loss(const Tensor& a, const Eigen::MatrixXd& target) {
  if (a.rows() != target.rows() || a.cols() != target.cols())
    throw std::invalid_argument("l1_loss: shape mismatch");
  return mean_abs(sub(a, Tensor(target)));
}

MelLossPlan make_mel_loss_plan(int sample_rate, const std::vector<int>& scales,
                               int bands) {
  MelLossPlan plan;
  plan.bands = bands;
  for (int win : scales) {
    MelScalePlan sp;
    sp.window = win;
    sp.hop = win / 4;
    const int bins = win / 2 + 1;
    sp.dft_cos.resize(win, bins);
    sp.dft_sin.resize(win, bins);
    for (int n = 0; n < win; ++n) {
      for (int k = 0; k < bins; ++k) {
        const double ang = -2.0 * kPi * k * n / win;
        sp.dft_cos(n, k) = std::cos(ang);
        sp.dft_sin(n, k) = std::sin(ang);
      }
    }
    sp.fb_t = mel_filterbank(bands, win, sample_rate).transpose();
    sp.win_row = hann_window(win).transpose();
    plan.scales.push_back(std::move(sp));
  }
  return plan;
}

Tensor log_mel_frames_diff(const Tensor& x, const MelScalePlan& plan) {
  Tensor frames = unfold_frames(x, plan.window, plan.hop);
  frames = rowwise_mul(frames, Tensor(plan.win_row));
  Tensor re = matmul(frames, Tensor(plan.dft_cos));
  Tensor im = matmul(frames, Tensor(plan.dft_sin));
  Tensor mag =
      sqrt_op(add_scalar(add(cmul(re, re), cmul(im, im)), kMagnitudeEps));
  Tensor mel = matmul(mag, Tensor(plan.fb_t));
  return log_op(cmax_scalar(mel, kMelFloor));
}

Tensor mel_loss(const Tensor& yhat, const Eigen::VectorXd& target,
                const MelLossPlan& plan) {
  if (yhat.cols() != 1 || yhat.rows() != target.size())
    throw std::invalid_argument("mel_loss: shape mismatch");
  Tensor total = Tensor::scalar_of(0.0);
  Tensor target_t(Eigen::MatrixXd(target));
  for (const MelScalePlan& sp : plan.scales) {
    Tensor la = log_mel_frames_diff(yhat, sp);
    Tensor lb = log_mel_frames_diff(target_t, sp);
    total = add(total, mean_abs(sub(la, lb)));
  }
  return scale(total, 1.0 / static_cast<double>(plan.scales.size()));
}

double mel_loss_value(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                      const MelLossPlan& plan) {
  return mel_loss(Tensor(Eigen::MatrixXd(a)), b, plan).scalar();
}

}  // namespace decodec
