#include "decodec/rvq.hpp"

#include "decodec/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace decodec {

Codebook make_codebook(Eigen::Index ksize, Eigen::Index dim, Rng& rng) {
  if (ksize < 2) throw std::invalid_argument("make_codebook: Ksize must be >= 2");
  Eigen::MatrixXd e = init_uniform(ksize, dim, dim, rng);
  e.row(0).setZero();  // pinned zero codeword
  Codebook cb;
  cb.entries = Tensor(std::move(e), /*requires_grad=*/true);
  cb.usage_counts.assign(static_cast<size_t>(ksize), 0);
  cb.steps_since_use.assign(static_cast<size_t>(ksize), 0);
  return cb;
}

RvqStack make_rvq_stack(int n_stages, Eigen::Index ksize, Eigen::Index dim,
                        Rng& rng) {
  RvqStack stack;
  for (int k = 0; k < n_stages; ++k)
    stack.stages.push_back(make_codebook(ksize, dim, rng));
  return stack;
}

std::vector<int> quantize_stage_indices(const Eigen::MatrixXd& residual,
                                        const Codebook& cb) {
  const Eigen::MatrixXd& e = cb.entries.value();
  if (residual.cols() != e.cols())
    throw std::invalid_argument("quantize_stage: dimension mismatch");
  std::vector<int> idx(static_cast<size_t>(residual.rows()));
  for (Eigen::Index t = 0; t < residual.rows(); ++t) {
    int best = 0;
    double best_d = (residual.row(t) - e.row(0)).squaredNorm();
    for (Eigen::Index k = 1; k < e.rows(); ++k) {
      const double d = (residual.row(t) - e.row(k)).squaredNorm();
      if (d < best_d) {  // strict: ties keep the lowest index
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    idx[static_cast<size_t>(t)] = best;
  }
  return idx;
}

std::pair<std::vector<int>, Eigen::MatrixXd> quantize_stage(
    const Eigen::MatrixXd& residual, const Codebook& cb) {
  std::vector<int> idx = quantize_stage_indices(residual, cb);
  Eigen::MatrixXd q(residual.rows(), residual.cols());
  for (Eigen::Index t = 0; t < residual.rows(); ++t)
    q.row(t) = cb.entries.value().row(idx[static_cast<size_t>(t)]);
  return {std::move(idx), std::move(q)};
}

namespace {

// Shared graph construction. When `frozen` is non-null, assignments and all
// stop-gradient constants come from the capture instead of live values.
RvqResult rvq_encode_impl(const Tensor& x, const RvqStack& stack,
                          const FrozenRvq* frozen) {
  const Eigen::Index t_len = x.rows();
  const int n_stages = stack.n_stages();
  RvqResult res;
  res.tokens.resize(t_len, n_stages);
  res.residual_norms.reserve(static_cast<size_t>(n_stages) + 1);

  Tensor residual = x;  // differentiable chain down the stack
  Eigen::MatrixXd residual_val = x.value();
  Eigen::MatrixXd zq = Eigen::MatrixXd::Zero(t_len, x.cols());
  Tensor codebook_loss = Tensor::scalar_of(0.0);
  Tensor commitment_loss = Tensor::scalar_of(0.0);

  for (int k = 0; k < n_stages; ++k) {
    res.residual_norms.push_back(residual_val.norm());
    const Codebook& cb = stack.stages[static_cast<size_t>(k)];

    std::vector<int> idx;
    if (frozen) {
      idx.resize(static_cast<size_t>(t_len));
      for (Eigen::Index t = 0; t < t_len; ++t)
        idx[static_cast<size_t>(t)] = frozen->tokens(t, k);
    } else {
      idx = quantize_stage_indices(residual_val, cb);
    }
    for (Eigen::Index t = 0; t < t_len; ++t)
      res.tokens(t, k) = idx[static_cast<size_t>(t)];

    Tensor q = gather_rows(cb.entries, idx);  // grad reaches entries only here
    Eigen::MatrixXd q_val = frozen ? frozen->quantized[static_cast<size_t>(k)]
                                   : q.value();
    Tensor q_const = frozen ? Tensor(q_val) : stopgrad(q);
    Tensor r_const = frozen ? Tensor(frozen->residuals[static_cast<size_t>(k)])
                            : stopgrad(residual);

    const double norm = 1.0 / static_cast<double>(t_len * x.cols());
    codebook_loss =
        add(codebook_loss, scale(sum_squares(sub(r_const, q)), norm));
    commitment_loss =
        add(commitment_loss, scale(sum_squares(sub(residual, q_const)), norm));

    residual = sub(residual, q_const);
    residual_val -= q_val;
    zq += q_val;
  }
  res.residual_norms.push_back(residual_val.norm());

  // Straight-through: forward equals the quantized sum, backward is identity
  // into x. Codebooks receive gradient only via the codebook loss.
  Eigen::MatrixXd offset = frozen ? frozen->st_offset
                                  : Eigen::MatrixXd(zq - x.value());
  res.z = add(x, Tensor(std::move(offset)));
  res.codebook_loss = codebook_loss;
  res.commitment_loss = commitment_loss;
  return res;
}

}  // namespace

RvqResult rvq_encode(const Tensor& x, const RvqStack& stack) {
  return rvq_encode_impl(x, stack, nullptr);
}

FrozenRvq rvq_capture(const Eigen::MatrixXd& x, const RvqStack& stack) {
  FrozenRvq fr;
  fr.tokens.resize(x.rows(), stack.n_stages());
  Eigen::MatrixXd residual = x;
  Eigen::MatrixXd zq = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (int k = 0; k < stack.n_stages(); ++k) {
    auto [idx, q] = quantize_stage(residual, stack.stages[static_cast<size_t>(k)]);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
      fr.tokens(t, k) = idx[static_cast<size_t>(t)];
    fr.residuals.push_back(residual);
    fr.quantized.push_back(q);
    residual -= q;
    zq += q;
  }
  fr.st_offset = zq - x;
  return fr;
}

RvqResult rvq_encode_frozen(const Tensor& x, const RvqStack& stack,
                            const FrozenRvq& frozen) {
  return rvq_encode_impl(x, stack, &frozen);
}

Eigen::MatrixXd rvq_lookup(const Eigen::MatrixXi& tokens, const RvqStack& stack) {
  if (tokens.cols() != stack.n_stages())
    throw std::invalid_argument("rvq_lookup: stage count mismatch");
  Eigen::MatrixXd z =
      Eigen::MatrixXd::Zero(tokens.rows(), stack.stages[0].dim());
  for (int k = 0; k < stack.n_stages(); ++k) {
    const Eigen::MatrixXd& e = stack.stages[static_cast<size_t>(k)].entries.value();
    for (Eigen::Index t = 0; t < tokens.rows(); ++t) {
      const int idx = tokens(t, k);
      if (idx < 0 || idx >= e.rows())
        throw std::out_of_range("rvq_lookup: token out of codebook range");
      z.row(t) += e.row(idx);
    }
  }
  return z;
}

std::pair<Eigen::MatrixXi, Eigen::MatrixXi> split_tokens(
    const Eigen::MatrixXi& tokens) {
  if (tokens.cols() < 1)
    throw std::invalid_argument("split_tokens: empty token matrix");
  Eigen::MatrixXi zc = tokens.col(0);
  Eigen::MatrixXi zr = tokens.rightCols(tokens.cols() - 1);
  return {std::move(zc), std::move(zr)};
}

Eigen::MatrixXi merge_tokens(const Eigen::MatrixXi& zc,
                             const Eigen::MatrixXi& zr) {
  if (zr.size() > 0 && zc.rows() != zr.rows())
    throw std::invalid_argument("merge_tokens: frame count mismatch");
  Eigen::MatrixXi out(zc.rows(), 1 + zr.cols());
  out.col(0) = zc.col(0);
  if (zr.cols() > 0) out.rightCols(zr.cols()) = zr;
  return out;
}

void record_usage(RvqStack& stack, const Eigen::MatrixXi& tokens) {
  for (int k = 0; k < stack.n_stages(); ++k) {
    Codebook& cb = stack.stages[static_cast<size_t>(k)];
    std::vector<bool> used(static_cast<size_t>(cb.size()), false);
    for (Eigen::Index t = 0; t < tokens.rows(); ++t)
      used[static_cast<size_t>(tokens(t, k))] = true;
    for (Eigen::Index e = 0; e < cb.size(); ++e) {
      if (used[static_cast<size_t>(e)]) {
        cb.usage_counts[static_cast<size_t>(e)]++;
        cb.steps_since_use[static_cast<size_t>(e)] = 0;
      } else {
        cb.steps_since_use[static_cast<size_t>(e)]++;
      }
    }
  }
}

int reseed_dead_entries(RvqStack& stack, const Eigen::MatrixXd& sample_frames,
                        int patience, Rng& rng) {
  int reseeded = 0;
  if (sample_frames.rows() == 0) return 0;
  for (int k = 0; k < stack.n_stages(); ++k) {
    Codebook& cb = stack.stages[static_cast<size_t>(k)];
    for (Eigen::Index e = 1; e < cb.size(); ++e) {  // never row 0
      if (cb.steps_since_use[static_cast<size_t>(e)] < patience) continue;
      const Eigen::Index row =
          static_cast<Eigen::Index>(rng.uniform_int(sample_frames.rows()));
      cb.entries.mutable_value().row(e) = sample_frames.row(row);
      cb.steps_since_use[static_cast<size_t>(e)] = 0;
      ++reseeded;
    }
  }
  return reseeded;
}

double usage_entropy(const RvqStack& stack) {
  double total_entropy = 0.0;
  for (const Codebook& cb : stack.stages) {
    long total = 0;
    for (long c : cb.usage_counts) total += c;
    if (total == 0) continue;
    double h = 0.0;
    for (long c : cb.usage_counts) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(total);
      h -= p * std::log2(p);
    }
    total_entropy += h;
  }
  return total_entropy / static_cast<double>(stack.n_stages());
}

// ---------------------------------------------------------------------------
// Semantic guidance
// ---------------------------------------------------------------------------

SyntheticContentTeacher::SyntheticContentTeacher(int n_symbols, int dh,
                                                 std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0x7eacherULL));
  w_.resize(n_symbols, dh);
  for (int s = 0; s < n_symbols; ++s)
    for (int d = 0; d < dh; ++d) w_(s, d) = rng.normal();
}

Eigen::MatrixXd SyntheticContentTeacher::produce(
    const SyntheticUtterance& clean) const {
  const Eigen::Index t_len = static_cast<Eigen::Index>(clean.content_track.size());
  Eigen::MatrixXd raw(t_len, w_.cols());
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const int sym = clean.content_track[static_cast<size_t>(t)];
    if (sym < 0 || sym >= w_.rows())
      throw std::out_of_range("teacher: content symbol out of range");
    raw.row(t) = w_.row(sym).array().tanh();
  }
  // 3-frame centered moving average, edges clamped.
  Eigen::MatrixXd h(t_len, w_.cols());
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - 1);
    const Eigen::Index hi = std::min(t_len - 1, t + 1);
    h.row(t) = raw.middleRows(lo, hi - lo + 1).colwise().mean();
  }
  return h;
}

SgHead make_sg_head(Eigen::Index dh, Eigen::Index d, Rng& rng) {
  return SgHead{Tensor(init_uniform(dh, d, d, rng), /*requires_grad=*/true)};
}

Tensor sg_loss(const Tensor& zc, const Eigen::MatrixXd& h, const SgHead& head) {
  if (zc.rows() != h.rows())
    throw std::invalid_argument("sg_loss: frame count mismatch");
  constexpr double eps = 1e-12;
  Tensor proj = matmul(zc, transpose(head.w));  // T x Dh
  Tensor dots = rowwise_dot(proj, Tensor(h));
  Tensor norm_p = sqrt_op(add_scalar(row_sum(cmul(proj, proj)), eps));
  Eigen::MatrixXd nh =
      (h.rowwise().squaredNorm().array() + eps).sqrt().matrix();
  Tensor cos = cdiv(dots, cmul(norm_p, Tensor(nh)));
  // |log sigmoid(c)| = log(1 + exp(-c))
  return mean(softplus(scale(cos, -1.0)));
}

}  // namespace decodec
