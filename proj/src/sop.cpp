#include "decodec/sop.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace decodec {

ProjectionPair make_projection_pair(Eigen::Index dim, Rng& rng, double noise) {
  auto init = [&](void) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(dim, dim) * 0.5;
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = 0; c < dim; ++c) m(r, c) += rng.uniform(-noise, noise);
    return m;
  };
  ProjectionPair pp;
  pp.p_s = Tensor(init(), /*requires_grad=*/true);
  pp.p_n = Tensor(init(), /*requires_grad=*/true);
  return pp;
}

std::pair<Tensor, Tensor> project(const Tensor& y, const ProjectionPair& pp) {
  if (y.cols() != pp.dim())
    throw std::invalid_argument("project: embedding dimension mismatch");
  return {matmul(y, transpose(pp.p_s)), matmul(y, transpose(pp.p_n))};
}

Tensor orthogonality_loss(const Tensor& s, const Tensor& n) {
  detail::check_same_shape(s, n, "orthogonality_loss");
  Tensor ip = rowwise_dot(s, n);  // T x 1
  Tensor norm = sqrt_op(sum_squares(ip));
  return scale(norm, 1.0 / static_cast<double>(s.rows()));
}

OrthogonalityReport projector_orthogonality_report(const ProjectionPair& pp) {
  const Eigen::MatrixXd& ps = pp.p_s.value();
  const Eigen::MatrixXd& pn = pp.p_n.value();
  const Eigen::Index d = ps.rows();

  OrthogonalityReport rep;
  rep.cosine_histogram.assign(40, 0.0);
  double acc = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double ni = ps.row(i).norm();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double nj = pn.row(j).norm();
      double c = 0.0;
      if (ni > 0.0 && nj > 0.0) c = ps.row(i).dot(pn.row(j)) / (ni * nj);
      acc += std::abs(c);
      ++count;
      int bin = static_cast<int>((c + 1.0) * 0.5 * 40.0);
      bin = std::min(std::max(bin, 0), 39);
      rep.cosine_histogram[static_cast<size_t>(bin)] += 1.0;
    }
  }
  rep.mean_abs_cosine = acc / static_cast<double>(count);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd_s(ps);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_n(pn);
  rep.singular_values_s = svd_s.singularValues();
  rep.singular_values_n = svd_n.singularValues();
  return rep;
}

double projector_gram_norm(const ProjectionPair& pp, const Eigen::MatrixXd& cov) {
  return (pp.p_s.value() * cov * pp.p_n.value().transpose()).norm();
}

double mean_abs_frame_cosine(const Eigen::MatrixXd& s, const Eigen::MatrixXd& n) {
  double acc = 0.0;
  for (Eigen::Index t = 0; t < s.rows(); ++t) {
    const double ns = s.row(t).norm();
    const double nn = n.row(t).norm();
    if (ns > 0.0 && nn > 0.0) acc += std::abs(s.row(t).dot(n.row(t))) / (ns * nn);
  }
  return acc / static_cast<double>(s.rows());
}

}  // namespace decodec
