// Subspace orthogonal projection: two trainable D x D maps splitting a
// mixture embedding into speech and background components, with a penalty on
// per-frame inner products between the two outputs.

#pragma once

#include "decodec/rng.hpp"
#include "decodec/tensor.hpp"

#include <utility>
#include <vector>

namespace decodec {

struct ProjectionPair {
  Tensor p_s;  // D x D
  Tensor p_n;  // D x D

  Eigen::Index dim() const { return p_s.rows(); }
};

// Both maps start at an exact additive split (P_S = P_N = I/2) plus small
// noise; S + N == Y holds at initialization and is afterwards maintained
// only through the reconstruction losses (untied projectors).
ProjectionPair make_projection_pair(Eigen::Index dim, Rng& rng,
                                    double noise = 0.01);

// S = Y P_S^T, N = Y P_N^T, per frame.
std::pair<Tensor, Tensor> project(const Tensor& y, const ProjectionPair& pp);

// L_perp = ||per-frame <S_t, N_t>||_2 / T.
Tensor orthogonality_loss(const Tensor& s, const Tensor& n);

struct OrthogonalityReport {
  double mean_abs_cosine = 0.0;  // over all row pairs of P_S vs P_N
  Eigen::VectorXd singular_values_s;
  Eigen::VectorXd singular_values_n;
  std::vector<double> cosine_histogram;  // 40 bins over [-1, 1]
};

OrthogonalityReport projector_orthogonality_report(const ProjectionPair& pp);

// ||P_S C P_N^T||_F for a batch covariance C; the trained-orthogonality
// diagnostic tracked across checkpoints.
double projector_gram_norm(const ProjectionPair& pp, const Eigen::MatrixXd& cov);

// Mean per-frame |cos(S_t, N_t)| of already-projected embeddings.
double mean_abs_frame_cosine(const Eigen::MatrixXd& s, const Eigen::MatrixXd& n);

}  // namespace decodec
