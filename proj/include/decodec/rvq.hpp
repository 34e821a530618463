// Residual vector quantization stacks with VQ-VAE codebook/commitment losses,
// straight-through gradients, and the semantic-guidance loss on the first
// speech stage.
//
// Entry 0 of every codebook is a pinned zero codeword: it is excluded from
// learning and reseeding, which makes per-stage residual energy exactly
// non-increasing (the quantizer can always pick zero).

#pragma once

#include "decodec/corpus.hpp"
#include "decodec/rng.hpp"
#include "decodec/tensor.hpp"

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace decodec {

struct Codebook {
  Tensor entries;  // Ksize x dim; row 0 pinned to zero
  std::vector<long> usage_counts;
  std::vector<int> steps_since_use;

  Eigen::Index size() const { return entries.rows(); }
  Eigen::Index dim() const { return entries.cols(); }
};

struct RvqStack {
  std::vector<Codebook> stages;
  double commitment_beta = 1.0;

  int n_stages() const { return static_cast<int>(stages.size()); }
};

Codebook make_codebook(Eigen::Index ksize, Eigen::Index dim, Rng& rng);
RvqStack make_rvq_stack(int n_stages, Eigen::Index ksize, Eigen::Index dim,
                        Rng& rng);

// Per-frame nearest entry by squared L2; ties break to the lowest index.
std::vector<int> quantize_stage_indices(const Eigen::MatrixXd& residual,
                                        const Codebook& cb);
std::pair<std::vector<int>, Eigen::MatrixXd> quantize_stage(
    const Eigen::MatrixXd& residual, const Codebook& cb);

struct RvqResult {
  Eigen::MatrixXi tokens;              // T x stages
  Tensor z;                            // straight-through sum of stage outputs
  std::vector<double> residual_norms;  // Frobenius norms, stages + 1 entries
  Tensor codebook_loss;                // sum over stages of per-stage means
  Tensor commitment_loss;
};

// Assignments and straight-through constants captured at a base point, so a
// finite-difference probe sees the same affine function the analytic
// straight-through gradient differentiates.
struct FrozenRvq {
  Eigen::MatrixXi tokens;
  Eigen::MatrixXd st_offset;               // Zq - X at the base point
  std::vector<Eigen::MatrixXd> residuals;  // r_{k-1} per stage
  std::vector<Eigen::MatrixXd> quantized;  // Q^k per stage
};

RvqResult rvq_encode(const Tensor& x, const RvqStack& stack);
FrozenRvq rvq_capture(const Eigen::MatrixXd& x, const RvqStack& stack);
RvqResult rvq_encode_frozen(const Tensor& x, const RvqStack& stack,
                            const FrozenRvq& frozen);

// Codebook lookup sum (no tape): the decode path from tokens.
Eigen::MatrixXd rvq_lookup(const Eigen::MatrixXi& tokens, const RvqStack& stack);

// Zc tokens (stage 1) and Zr tokens (stages 2..K_s). Lossless re-merge.
std::pair<Eigen::MatrixXi, Eigen::MatrixXi> split_tokens(
    const Eigen::MatrixXi& tokens);
Eigen::MatrixXi merge_tokens(const Eigen::MatrixXi& zc,
                             const Eigen::MatrixXi& zr);

// Training-side codebook maintenance.
void record_usage(RvqStack& stack, const Eigen::MatrixXi& tokens);
// Entries (other than the pinned zero) unused for `patience` consecutive
// steps are re-seeded to a random row of `sample_frames`.
int reseed_dead_entries(RvqStack& stack, const Eigen::MatrixXd& sample_frames,
                        int patience, Rng& rng);
double usage_entropy(const RvqStack& stack);

// ---------------------------------------------------------------------------
// Semantic guidance
// ---------------------------------------------------------------------------

class SemanticTeacher {
 public:
  virtual ~SemanticTeacher() = default;
  // Frames x Dh representation of the clean utterance, at the codec frame
  // rate, deterministic per utterance.
  virtual Eigen::MatrixXd produce(const SyntheticUtterance& clean) const = 0;
  virtual int dim() const = 0;
};

// Fixed random linear + tanh on the one-hot content track, smoothed over
// three frames: carries content and, by construction, nothing else.
class SyntheticContentTeacher : public SemanticTeacher {
 public:
  SyntheticContentTeacher(int n_symbols, int dh, std::uint64_t seed);
  Eigen::MatrixXd produce(const SyntheticUtterance& clean) const override;
  int dim() const override { return static_cast<int>(w_.cols()); }

 private:
  Eigen::MatrixXd w_;  // n_symbols x Dh
};

struct SgHead {
  Tensor w;  // Dh x D
};

SgHead make_sg_head(Eigen::Index dh, Eigen::Index d, Rng& rng);

// L_SG = mean_t |log sigmoid(cos(W zc_t, h_t))| = mean_t softplus(-cos_t).
// Zero-norm vectors contribute cosine 0.
Tensor sg_loss(const Tensor& zc, const Eigen::MatrixXd& h, const SgHead& head);

}  // namespace decodec
