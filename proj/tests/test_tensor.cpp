#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "decodec/layers.hpp"
#include "decodec/tensor.hpp"

using namespace decodec;

namespace {

Eigen::MatrixXd random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("backward accumulates through shared nodes") {
  Tensor x(Eigen::MatrixXd::Constant(1, 1, 3.0), true);
  Tensor y = cmul(x, x);  // x^2 via both-parent path
  y.backward();
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("grad_check: f(x) = sum(x) has unit gradient") {
  Rng rng(7);
  const Eigen::MatrixXd p = random_mat(4, 3, rng);
  const double err = grad_check(
      [](const Tensor& x) { return sum(x); }, p, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check: f(x) = sum(x^2) at x=[3] gives gradient 6") {
  Eigen::MatrixXd p(1, 1);
  p << 3.0;
  Tensor x(p, true);
  sum(cmul(x, x)).backward();
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
  const double err = grad_check(
      [](const Tensor& t) { return sum(cmul(t, t)); }, p, 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check covers the elementwise op set") {
  Rng rng(21);
  const Eigen::MatrixXd p = random_mat(5, 4, rng);
  auto f = [](const Tensor& x) {
    Tensor a = tanh_op(scale(x, 0.7));
    Tensor b = sigmoid_op(x);
    Tensor c = softplus(sub(a, b));
    Tensor d = sqrt_op(add_scalar(cmul(c, c), 1e-3));
    return mean(add(d, log_op(add_scalar(b, 1.0))));
  };
  CHECK(grad_check(f, p, 1e-5) < 1e-6);
}

TEST_CASE("grad_check: matmul, transpose, slicing, reductions") {
  Rng rng(22);
  const Eigen::MatrixXd p = random_mat(6, 3, rng);
  const Eigen::MatrixXd w = random_mat(3, 5, rng);
  auto f = [&](const Tensor& x) {
    Tensor y = matmul(x, Tensor(w));
    Tensor z = slice_rows(y, 1, 4);
    Tensor rs = row_sum(cmul(z, z));
    return add(mean(rs), sum(abs_op(transpose(slice_rows(x, 0, 2)))));
  };
  CHECK(grad_check(f, p, 1e-5) < 1e-6);
}

TEST_CASE("gather_rows scatters gradients back to the table") {
  Rng rng(23);
  const Eigen::MatrixXd table = random_mat(6, 4, rng);
  auto f = [](const Tensor& t) {
    Tensor g = gather_rows(t, {0, 2, 2, 5});
    return sum(cmul(g, g));
  };
  CHECK(grad_check(f, table, 1e-5) < 1e-7);
}

TEST_CASE("unfold_frames round-trips gradient mass") {
  Rng rng(24);
  const Eigen::MatrixXd x = random_mat(32, 1, rng);
  auto f = [](const Tensor& t) {
    return sum(cmul(unfold_frames(t, 8, 4), unfold_frames(t, 8, 4)));
  };
  CHECK(grad_check(f, x, 1e-5) < 1e-7);
}

TEST_CASE("stopgrad blocks the path") {
  Tensor x(Eigen::MatrixXd::Constant(1, 1, 2.0), true);
  Tensor y = cmul(x, stopgrad(x));  // d/dx = stopgrad(x) only
  y.backward();
  CHECK(x.grad()(0, 0) == doctest::Approx(2.0));
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

TEST_CASE("conv1d identity kernel is the identity") {
  Rng rng(31);
  const Eigen::MatrixXd x = random_mat(10, 3, rng);
  // K=1, Cout=Cin, stride 1: weight is the 3x3 identity.
  Tensor w(Eigen::MatrixXd(Eigen::MatrixXd::Identity(3, 3)));
  Tensor out = conv1d(Tensor(x), w, Tensor(), 1, 1, true);
  CHECK((out.value() - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("conv1d hand example: causal stride-2 sum kernel") {
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 4;
  Eigen::MatrixXd w(2, 1);  // K=2, Cin=1, Cout=1, taps [1, 1]
  w << 1, 1;
  Tensor out = conv1d(Tensor(x), Tensor(w), Tensor(), 2, 2, true);
  REQUIRE(out.rows() == 2);
  CHECK(out.value()(0, 0) == doctest::Approx(1.0));  // 0 + 1 (zero past-pad)
  CHECK(out.value()(1, 0) == doctest::Approx(5.0));  // 2 + 3
}

TEST_CASE("conv1d all-zero kernel: zero output and zero input gradient") {
  Rng rng(32);
  const Eigen::MatrixXd x = random_mat(8, 2, rng);
  Tensor xt(x, true);
  Tensor w(Eigen::MatrixXd(Eigen::MatrixXd::Zero(2 * 3, 4)));
  Tensor out = conv1d(xt, w, Tensor(), 3, 1, false);
  CHECK(out.value().norm() == doctest::Approx(0.0));
  sum(cmul(out, out)).backward();
  CHECK(xt.grad().norm() == doctest::Approx(0.0));
}

TEST_CASE("conv1d shape mismatch raises a configuration error") {
  Rng rng(33);
  const Eigen::MatrixXd x = random_mat(8, 3, rng);
  Tensor w(random_mat(2 * 4, 4, rng));  // expects Cin=4, input has 3
  CHECK_THROWS_AS(conv1d(Tensor(x), w, Tensor(), 2, 1, true),
                  std::invalid_argument);
}

TEST_CASE("conv1d output frames = ceil(T / stride)") {
  Rng rng(34);
  for (int t_in : {7, 8, 9, 20}) {
    for (int stride : {1, 2, 3, 4}) {
      const Eigen::MatrixXd x = random_mat(t_in, 2, rng);
      Tensor w(random_mat(2 * 3, 2, rng));
      Tensor out = conv1d(Tensor(x), w, Tensor(), 3, stride, true);
      CHECK(out.rows() == (t_in + stride - 1) / stride);
    }
  }
}

TEST_CASE("conv1d gradient matches finite differences") {
  Rng rng(35);
  const Eigen::MatrixXd x = random_mat(9, 2, rng);
  const Eigen::MatrixXd w = random_mat(2 * 3, 3, rng);
  const Eigen::MatrixXd b = random_mat(1, 3, rng);
  for (bool causal : {true, false}) {
    auto fx = [&](const Tensor& t) {
      return sum(cmul(conv1d(t, Tensor(w), Tensor(b), 3, 2, causal),
                      conv1d(t, Tensor(w), Tensor(b), 3, 2, causal)));
    };
    CHECK(grad_check(fx, x, 1e-5) < 1e-7);
    auto fw = [&](const Tensor& t) {
      return sum(cmul(conv1d(Tensor(x), t, Tensor(b), 3, 2, causal),
                      conv1d(Tensor(x), t, Tensor(b), 3, 2, causal)));
    };
    CHECK(grad_check(fw, w, 1e-5) < 1e-7);
  }
}

// ---------------------------------------------------------------------------
// conv1d_transposed
// ---------------------------------------------------------------------------

TEST_CASE("conv1d_transposed stride-1 identity kernel is the identity") {
  Rng rng(41);
  const Eigen::MatrixXd x = random_mat(10, 3, rng);
  Tensor w(Eigen::MatrixXd(Eigen::MatrixXd::Identity(3, 3)));
  Tensor out = conv1d_transposed(Tensor(x), w, Tensor(), 1, 1, true);
  CHECK((out.value() - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("conv1d_transposed zero input maps to zero output") {
  Rng rng(42);
  Tensor w(random_mat(3 * 4, 2, rng));
  Tensor out = conv1d_transposed(
      Tensor(Eigen::MatrixXd(Eigen::MatrixXd::Zero(5, 2))), w, Tensor(), 4, 2,
      false);
  CHECK(out.rows() == 10);
  CHECK(out.value().norm() == doctest::Approx(0.0));
}

TEST_CASE("adjoint identity: <conv(x), y> == <x, conv_T(y)> (pad-matched)") {
  // The spec's example shape: random 8-frame, 2-channel tensors.
  Rng rng(43);
  const int kernel = 4, stride = 2;
  const Eigen::MatrixXd w = random_mat(2 * kernel, 3, rng);
  for (int pad : {0, (kernel - 1) / 2, kernel - 1}) {
    const Eigen::MatrixXd x = random_mat(8, 2, rng);
    const Eigen::MatrixXd y = random_mat(4, 3, rng);
    Tensor cx = conv1d_padded(Tensor(x), Tensor(w), Tensor(), kernel, stride, pad);
    Tensor ty = conv1d_transposed_padded(Tensor(y), Tensor(w), Tensor(), kernel,
                                         stride, pad);
    const double lhs = (cx.value().array() * y.array()).sum();
    const double rhs = (x.array() * ty.value().array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("adjoint property holds across random shapes (non-causal pairing)") {
  Rng rng(44);
  for (int trial = 0; trial < 25; ++trial) {
    const int stride = 1 + static_cast<int>(rng.uniform_int(4));
    const int kernel = 1 + static_cast<int>(rng.uniform_int(6));
    const int cin = 1 + static_cast<int>(rng.uniform_int(3));
    const int cout = 1 + static_cast<int>(rng.uniform_int(3));
    const int frames = stride * (1 + static_cast<int>(rng.uniform_int(6)));
    const Eigen::MatrixXd w = random_mat(cin * kernel, cout, rng);
    const Eigen::MatrixXd x = random_mat(frames, cin, rng);
    const Eigen::MatrixXd y = random_mat(frames / stride, cout, rng);
    Tensor cx = conv1d(Tensor(x), Tensor(w), Tensor(), kernel, stride, false);
    Tensor ty = conv1d_transposed(Tensor(y), Tensor(w), Tensor(), kernel,
                                  stride, false);
    const double lhs = (cx.value().array() * y.array()).sum();
    const double rhs = (x.array() * ty.value().array()).sum();
    CHECK(std::abs(lhs - rhs) < 1e-9 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("causal transposed conv scatters only forward in time") {
  Rng rng(45);
  const int stride = 3, kernel = 6;
  const Eigen::MatrixXd w = random_mat(2 * kernel, 2, rng);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(6, 2);
  u(3, 0) = 1.0;  // impulse at frame 3
  Tensor out = conv1d_transposed(Tensor(u), Tensor(w), Tensor(), kernel, stride,
                                 true);
  for (Eigen::Index t = 0; t < 3 * stride; ++t)
    CHECK(out.value().row(t).norm() == doctest::Approx(0.0));
  CHECK(out.value().row(3 * stride).norm() > 0.0);
}

TEST_CASE("conv1d_transposed gradient matches finite differences") {
  Rng rng(46);
  const Eigen::MatrixXd x = random_mat(6, 3, rng);
  const Eigen::MatrixXd w = random_mat(2 * 4, 3, rng);
  auto fx = [&](const Tensor& t) {
    Tensor o = conv1d_transposed(t, Tensor(w), Tensor(), 4, 2, false);
    return sum(cmul(o, o));
  };
  CHECK(grad_check(fx, x, 1e-5) < 1e-7);
  auto fw = [&](const Tensor& t) {
    Tensor o = conv1d_transposed(Tensor(x), t, Tensor(), 4, 2, false);
    return sum(cmul(o, o));
  };
  CHECK(grad_check(fw, w, 1e-5) < 1e-7);
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

namespace {

LstmCell<double> random_cell(Eigen::Index in, Eigen::Index hidden, Rng& rng,
                             bool zero_bias = false) {
  LstmCell<double> c;
  c.wx = Tensor(init_uniform(in, 4 * hidden, in, rng), true);
  c.wh = Tensor(init_uniform(hidden, 4 * hidden, hidden, rng), true);
  c.b = zero_bias ? Tensor(Eigen::MatrixXd::Zero(1, 4 * hidden), true)
                  : Tensor(init_uniform(1, 4 * hidden, hidden, rng), true);
  return c;
}

}  // namespace

TEST_CASE("lstm: zero input with zero biases gives zero output") {
  Rng rng(51);
  LstmCell<double> cell = random_cell(3, 3, rng, /*zero_bias=*/true);
  Tensor out = lstm(Tensor(Eigen::MatrixXd(Eigen::MatrixXd::Zero(12, 3))), cell);
  CHECK(out.value().norm() == doctest::Approx(0.0));
}

TEST_CASE("lstm causality: perturbing frame t changes only frames >= t") {
  Rng rng(52);
  LstmCell<double> cell = random_cell(2, 2, rng);
  Eigen::MatrixXd x = random_mat(10, 2, rng);
  const Eigen::MatrixXd base = lstm(Tensor(x), cell).value();
  const int t = 4;
  x(t, 0) += 0.5;
  const Eigen::MatrixXd pert = lstm(Tensor(x), cell).value();
  for (int i = 0; i < t; ++i)
    CHECK((base.row(i) - pert.row(i)).norm() == doctest::Approx(0.0));
  CHECK((base.row(t) - pert.row(t)).norm() > 0.0);
}

TEST_CASE("lstm matches an independent gate-equation recomputation") {
  Rng rng(53);
  const Eigen::Index h = 3;
  LstmCell<double> cell = random_cell(2, h, rng);
  const Eigen::MatrixXd x = random_mat(7, 2, rng);
  const Eigen::MatrixXd out = lstm(Tensor(x), cell).value();

  // Reference loop with scalar math.
  Eigen::VectorXd hh = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd cc = Eigen::VectorXd::Zero(h);
  const Eigen::MatrixXd& wx = cell.wx.value();
  const Eigen::MatrixXd& wh = cell.wh.value();
  const Eigen::MatrixXd& b = cell.b.value();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    Eigen::VectorXd a = wx.transpose() * x.row(t).transpose() +
                        wh.transpose() * hh + b.transpose();
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i_g = sig(a(j));
      const double f_g = sig(a(h + j));
      const double g_g = std::tanh(a(2 * h + j));
      const double o_g = sig(a(3 * h + j));
      cc(j) = f_g * cc(j) + i_g * g_g;
      hh(j) = o_g * std::tanh(cc(j));
    }
    CHECK((out.row(t).transpose() - hh).norm() < 1e-12);
  }
}

TEST_CASE("bilstm equals forward plus reversed backward pass") {
  Rng rng(54);
  LstmCell<double> fw = random_cell(2, 2, rng);
  LstmCell<double> bw = random_cell(2, 2, rng);
  const Eigen::MatrixXd x = random_mat(9, 2, rng);
  const Eigen::MatrixXd got = bilstm(Tensor(x), fw, bw).value();
  const Eigen::MatrixXd f = lstm(Tensor(x), fw).value();
  const Eigen::MatrixXd rev_in = x.colwise().reverse();
  const Eigen::MatrixXd b_rev = lstm(Tensor(rev_in), bw).value();
  const Eigen::MatrixXd expect = f + b_rev.colwise().reverse();
  CHECK((got - expect).norm() < 1e-12);
}

TEST_CASE("lstm gradients match finite differences") {
  Rng rng(55);
  LstmCell<double> cell = random_cell(2, 3, rng);
  const Eigen::MatrixXd x = random_mat(6, 2, rng);
  auto fx = [&](const Tensor& t) {
    Tensor o = lstm(t, cell);
    return sum(cmul(o, o));
  };
  CHECK(grad_check(fx, x, 1e-5) < 1e-6);

  // Parameter gradients, each matrix in turn.
  auto check_param = [&](Tensor LstmCell<double>::* field) {
    const Eigen::MatrixXd base = (cell.*field).value();
    auto f = [&](const Tensor& t) {
      LstmCell<double> c2 = cell;
      c2.*field = t;
      Tensor o = lstm(Tensor(x), c2);
      return sum(cmul(o, o));
    };
    CHECK(grad_check(f, base, 1e-5) < 1e-6);
  };
  check_param(&LstmCell<double>::wx);
  check_param(&LstmCell<double>::wh);
  check_param(&LstmCell<double>::b);
}

TEST_CASE("grad_check rejects eps outside [1e-6, 1e-3]") {
  Eigen::MatrixXd p(1, 1);
  p << 1.0;
  CHECK_THROWS_AS(grad_check([](const Tensor& x) { return sum(x); }, p, 1e-7),
                  std::invalid_argument);
  CHECK_THROWS_AS(grad_check([](const Tensor& x) { return sum(x); }, p, 1e-2),
                  std::invalid_argument);
}

TEST_CASE("grad_check reports non-finite values as errors") {
  Eigen::MatrixXd p(1, 1);
  p << -1.0;
  CHECK_THROWS_AS(
      grad_check([](const Tensor& x) { return sum(log_op(x)); }, p, 1e-5),
      std::runtime_error);
}
