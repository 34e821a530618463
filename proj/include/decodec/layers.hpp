// Layer primitives on the autodiff tape: 1-D convolution (im2col), its
// transpose (col2im), linear maps and LSTM/BiLSTM recurrences.
//
// Geometry. conv1d produces ceil(T / stride) frames. Causal layers pad only
// the past (pad_left = K-1); non-causal layers pad symmetrically
// (pad_left = (K-1)/2). Out-of-range taps read zero.
//
// conv1d_transposed produces T * stride frames. With matching pad_left the
// two ops are exact linear adjoints of one another:
//   <conv1d_padded(x, W, p), y> == <x, conv1d_transposed_padded(y, W, p)>.
// The public causal transposed conv scatters with pad_left = 0 so every
// output sample t draws only on frames t' with t'*stride <= t; that keeps
// decode free of lookahead (the adjoint of a past-padded conv would read
// future frames instead).
//
// Weight layout for both convs is (Cin*K) x Cout with patch column
// k*Cin + ci, i.e. the kernel tap index varies slowest.

#pragma once

#include "decodec/rng.hpp"
#include "decodec/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace decodec {

inline Eigen::Index conv_out_frames(Eigen::Index in_frames, int stride) {
  return (in_frames + stride - 1) / stride;
}

inline int conv_pad_left(int kernel, bool causal) {
  return causal ? kernel - 1 : (kernel - 1) / 2;
}

namespace detail {

// Patch matrix: row t' holds input[t'*stride + k - pad_left, ci] at column
// k*Cin + ci, zeros outside the signal.
template <typename S>
typename TensorT<S>::Mat im2col(const typename TensorT<S>::Mat& in, int kernel,
                                int stride, int pad_left) {
  const Eigen::Index t_in = in.rows();
  const Eigen::Index cin = in.cols();
  const Eigen::Index t_out = conv_out_frames(t_in, stride);
  typename TensorT<S>::Mat patches =
      TensorT<S>::Mat::Zero(t_out, cin * kernel);
  for (Eigen::Index to = 0; to < t_out; ++to) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index ti = to * stride + k - pad_left;
      if (ti < 0 || ti >= t_in) continue;
      patches.block(to, k * cin, 1, cin) = in.row(ti);
    }
  }
  return patches;
}

// Adjoint of im2col for a signal of t_in rows.
template <typename S>
typename TensorT<S>::Mat col2im(const typename TensorT<S>::Mat& patches,
                                Eigen::Index t_in, Eigen::Index cin, int kernel,
                                int stride, int pad_left) {
  typename TensorT<S>::Mat out = TensorT<S>::Mat::Zero(t_in, cin);
  for (Eigen::Index to = 0; to < patches.rows(); ++to) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index ti = to * stride + k - pad_left;
      if (ti < 0 || ti >= t_in) continue;
      out.row(ti) += patches.block(to, k * cin, 1, cin);
    }
  }
  return out;
}

}  // namespace detail

// input: T x Cin, weight: (Cin*K) x Cout, bias: 1 x Cout or undefined.
template <typename S>
TensorT<S> conv1d_padded(const TensorT<S>& input, const TensorT<S>& weight,
                         const TensorT<S>& bias, int kernel, int stride,
                         int pad_left) {
  if (kernel < 1 || stride < 1)
    throw std::invalid_argument("conv1d: kernel and stride must be >= 1");
  const Eigen::Index cin = input.cols();
  if (weight.rows() != cin * kernel)
    throw std::invalid_argument("conv1d: kernel channel count does not match input");
  using Mat = typename TensorT<S>::Mat;
  Mat patches = detail::im2col<S>(input.value(), kernel, stride, pad_left);
  Mat out = patches * weight.value();
  if (bias.defined()) out.rowwise() += bias.value().row(0);

  std::vector<TensorT<S>> parents = {input, weight};
  if (bias.defined()) parents.push_back(bias);
  auto state = std::make_shared<Mat>(std::move(patches));
  const Eigen::Index t_in = input.rows();
  return detail::make_op<S>(
      std::move(out), std::move(parents),
      [state, t_in, cin, kernel, stride, pad_left](TensorNodeT<S>& n) {
        if (n.parents[0]->needs_grad) {
          Mat dpatch = n.grad * n.parents[1]->value.transpose();
          n.parents[0]->accumulate(
              detail::col2im<S>(dpatch, t_in, cin, kernel, stride, pad_left));
        }
        if (n.parents[1]->needs_grad)
          n.parents[1]->accumulate(state->transpose() * n.grad);
        if (n.parents.size() > 2 && n.parents[2]->needs_grad)
          n.parents[2]->accumulate(n.grad.colwise().sum());
      });
}

// input: T' x Cout, weight: (Cin*K) x Cout (the layout of the adjoint conv),
// output: (T'*stride) x Cin.
template <typename S>
TensorT<S> conv1d_transposed_padded(const TensorT<S>& input,
                                    const TensorT<S>& weight,
                                    const TensorT<S>& bias, int kernel,
                                    int stride, int pad_left) {
  if (kernel < 1 || stride < 1)
    throw std::invalid_argument("conv1d_transposed: kernel and stride must be >= 1");
  if (weight.cols() != input.cols())
    throw std::invalid_argument("conv1d_transposed: kernel channel count does not match input");
  using Mat = typename TensorT<S>::Mat;
  const Eigen::Index cin = weight.rows() / kernel;
  const Eigen::Index t_out = input.rows() * stride;
  Mat spread = input.value() * weight.value().transpose();  // T' x (Cin*K)
  Mat out = detail::col2im<S>(spread, t_out, cin, kernel, stride, pad_left);
  if (bias.defined()) out.rowwise() += bias.value().row(0);

  std::vector<TensorT<S>> parents = {input, weight};
  if (bias.defined()) parents.push_back(bias);
  return detail::make_op<S>(
      std::move(out), std::move(parents),
      [cin, kernel, stride, pad_left](TensorNodeT<S>& n) {
        Mat gpatch = detail::im2col<S>(n.grad, kernel, stride, pad_left);
        if (n.parents[0]->needs_grad)
          n.parents[0]->accumulate(gpatch * n.parents[1]->value);
        if (n.parents[1]->needs_grad)
          n.parents[1]->accumulate(gpatch.transpose() * n.parents[0]->value);
        if (n.parents.size() > 2 && n.parents[2]->needs_grad)
          n.parents[2]->accumulate(n.grad.colwise().sum());
      });
}

template <typename S>
TensorT<S> conv1d(const TensorT<S>& input, const TensorT<S>& weight,
                  const TensorT<S>& bias, int kernel, int stride, bool causal) {
  return conv1d_padded(input, weight, bias, kernel, stride,
                       conv_pad_left(kernel, causal));
}

template <typename S>
TensorT<S> conv1d_transposed(const TensorT<S>& input, const TensorT<S>& weight,
                             const TensorT<S>& bias, int kernel, int stride,
                             bool causal) {
  return conv1d_transposed_padded(input, weight, bias, kernel, stride,
                                  causal ? 0 : (kernel - 1) / 2);
}

// ---------------------------------------------------------------------------
// Linear map: x (T x In) * W^T (In x Out) + b.
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& weight /*Out x In*/,
                  const TensorT<S>& bias /*1 x Out or undefined*/) {
  TensorT<S> y = matmul(x, transpose(weight));
  if (bias.defined()) y = rowwise_add(y, bias);
  return y;
}

// ---------------------------------------------------------------------------
// LSTM with canonical gating, implemented as a single tape node with
// hand-rolled truncated-free BPTT. Gate order in the packed matrices is
// [input, forget, cell, output].
// ---------------------------------------------------------------------------

template <typename S>
struct LstmCell {
  TensorT<S> wx;  // C x 4H
  TensorT<S> wh;  // H x 4H
  TensorT<S> b;   // 1 x 4H
};

template <typename S>
TensorT<S> lstm(const TensorT<S>& x, const LstmCell<S>& cell) {
  using Mat = typename TensorT<S>::Mat;
  const Eigen::Index t_len = x.rows();
  const Eigen::Index h = cell.wh.rows();
  if (cell.wx.cols() != 4 * h || cell.wh.cols() != 4 * h || cell.b.cols() != 4 * h)
    throw std::invalid_argument("lstm: packed gate shapes disagree");
  if (cell.wx.rows() != x.cols())
    throw std::invalid_argument("lstm: input width does not match wx");

  struct State {
    Mat gi, gf, gg, go;  // post-activation gates, T x H
    Mat c, tc;           // cell state and tanh(c), T x H
    Mat hs;              // hidden states, T x H
  };
  auto st = std::make_shared<State>();
  st->gi.resize(t_len, h); st->gf.resize(t_len, h); st->gg.resize(t_len, h);
  st->go.resize(t_len, h); st->c.resize(t_len, h); st->tc.resize(t_len, h);
  st->hs.resize(t_len, h);

  Mat hprev = Mat::Zero(1, h);
  Mat cprev = Mat::Zero(1, h);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Mat a = x.value().row(t) * cell.wx.value() + hprev * cell.wh.value() +
            cell.b.value();
    auto seg = [&](int g) { return a.block(0, g * h, 1, h).array(); };
    Eigen::Array<S, 1, Eigen::Dynamic> i = S(1) / (S(1) + (-seg(0)).exp());
    Eigen::Array<S, 1, Eigen::Dynamic> f = S(1) / (S(1) + (-seg(1)).exp());
    Eigen::Array<S, 1, Eigen::Dynamic> g = seg(2).tanh();
    Eigen::Array<S, 1, Eigen::Dynamic> o = S(1) / (S(1) + (-seg(3)).exp());
    Eigen::Array<S, 1, Eigen::Dynamic> c = f * cprev.row(0).array() + i * g;
    Eigen::Array<S, 1, Eigen::Dynamic> tc = c.tanh();
    st->gi.row(t) = i; st->gf.row(t) = f; st->gg.row(t) = g; st->go.row(t) = o;
    st->c.row(t) = c; st->tc.row(t) = tc;
    hprev = (o * tc).matrix();
    cprev = c.matrix();
    st->hs.row(t) = hprev.row(0);
  }

  return detail::make_op<S>(
      st->hs, {x, cell.wx, cell.wh, cell.b}, [st, t_len, h](TensorNodeT<S>& n) {
        using Arr = Eigen::Array<S, 1, Eigen::Dynamic>;
        const Mat& xv = n.parents[0]->value;
        const Mat& wx = n.parents[1]->value;
        const Mat& wh = n.parents[2]->value;
        Mat dx = Mat::Zero(xv.rows(), xv.cols());
        Mat dwx = Mat::Zero(wx.rows(), wx.cols());
        Mat dwh = Mat::Zero(wh.rows(), wh.cols());
        Mat db = Mat::Zero(1, 4 * h);
        Mat dh_next = Mat::Zero(1, h);
        Mat dc_next = Mat::Zero(1, h);
        for (Eigen::Index t = t_len - 1; t >= 0; --t) {
          Arr i = st->gi.row(t), f = st->gf.row(t), g = st->gg.row(t),
              o = st->go.row(t), tc = st->tc.row(t);
          Arr dh = n.grad.row(t).array() + dh_next.row(0).array();
          Arr dct = dh * o * (S(1) - tc.square()) + dc_next.row(0).array();
          Arr cprev = t > 0 ? Arr(st->c.row(t - 1)) : Arr::Zero(h);
          Mat da(1, 4 * h);
          da.block(0, 0, 1, h) = (dct * g * i * (S(1) - i)).matrix();
          da.block(0, h, 1, h) = (dct * cprev * f * (S(1) - f)).matrix();
          da.block(0, 2 * h, 1, h) = (dct * i * (S(1) - g.square())).matrix();
          da.block(0, 3 * h, 1, h) = (dh * tc * o * (S(1) - o)).matrix();
          Mat hprev = t > 0 ? Mat(st->hs.row(t - 1)) : Mat::Zero(1, h);
          dwx += xv.row(t).transpose() * da;
          dwh += hprev.transpose() * da;
          db += da;
          dx.row(t) = da * wx.transpose();
          dh_next = da * wh.transpose();
          dc_next = (dct * f).matrix();
        }
        if (n.parents[0]->needs_grad) n.parents[0]->accumulate(dx);
        if (n.parents[1]->needs_grad) n.parents[1]->accumulate(dwx);
        if (n.parents[2]->needs_grad) n.parents[2]->accumulate(dwh);
        if (n.parents[3]->needs_grad) n.parents[3]->accumulate(db);
      });
}

// Bidirectional variant: sum of the forward pass and the time-reversed
// backward pass, so the channel count is preserved.
template <typename S>
TensorT<S> bilstm(const TensorT<S>& x, const LstmCell<S>& fw,
                  const LstmCell<S>& bw) {
  return add(lstm(x, fw), reverse_rows(lstm(reverse_rows(x), bw)));
}

// recurrent_layer per the model contract: unidirectional when causal.
template <typename S>
TensorT<S> recurrent_layer(const TensorT<S>& x, const LstmCell<S>& fw,
                           const LstmCell<S>& bw, bool bidirectional) {
  return bidirectional ? bilstm(x, fw, bw) : lstm(x, fw);
}

// ---------------------------------------------------------------------------
// Initialization: uniform in +/- 1/sqrt(fan_in); biases zero.
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd init_uniform(Eigen::Index rows, Eigen::Index cols,
                                    Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

}  // namespace decodec
