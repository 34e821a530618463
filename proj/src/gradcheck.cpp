#include "decodec/gradcheck.hpp"

#include "decodec/losses.hpp"
#include "decodec/rng.hpp"
#include "decodec/training.hpp"

#include <cmath>
#include <functional>

namespace decodec {

namespace {

Eigen::MatrixXd smooth_random_signal(Eigen::Index n, Rng& rng) {
  // Low-passed noise keeps values generic but bounded.
  Eigen::MatrixXd x(n, 1);
  double state = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    state = 0.7 * state + 0.3 * rng.normal();
    x(i, 0) = state;
  }
  return x;
}

bool name_in_scope(const std::string& name,
                   const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

}  // namespace

std::vector<TermCheck> run_model_gradcheck(const ModelConfig& cfg,
                                           const ModelGradCheckOptions& opt) {
  DecodecModel model(cfg);
  Rng rng(Rng::mix(opt.seed, 0x6c));

  const Eigen::Index n_samples = 16 * cfg.hop();
  const Eigen::MatrixXd y11 = smooth_random_signal(n_samples, rng);
  const Eigen::MatrixXd y22 = smooth_random_signal(n_samples, rng);
  const Eigen::MatrixXd target = smooth_random_signal(n_samples, rng);
  const Eigen::Index frames = n_samples / cfg.hop();
  Eigen::MatrixXd teacher_h(frames, cfg.teacher_dim);
  for (Eigen::Index t = 0; t < frames; ++t)
    for (int d = 0; d < cfg.teacher_dim; ++d) teacher_h(t, d) = rng.normal();

  const MelLossPlan mel_plan =
      make_mel_loss_plan(cfg.sample_rate, cfg.mel_scales, cfg.mel_bands);

  // Quantizer state frozen at the base parameters: assignments and all
  // stop-gradient constants stay fixed across probes.
  FrozenRvq frozen_s, frozen_n;
  Eigen::MatrixXd sg_offset;
  {
    Tensor e1 = model.encoder_forward(Tensor(y11));
    auto [s1, n1] = project(e1, model.sop);
    Tensor e2 = model.encoder_forward(Tensor(y22));
    auto [s2, n2] = project(e2, model.sop);
    frozen_s = rvq_capture(s1.value(), model.srvq);
    frozen_n = rvq_capture(n2.value(), model.nrvq);
    sg_offset = frozen_s.quantized[0] - s1.value();
  }

  auto speech_branch = [&]() {
    Tensor e1 = model.encoder_forward(Tensor(y11));
    return project(e1, model.sop);
  };
  auto background_branch = [&]() {
    Tensor e2 = model.encoder_forward(Tensor(y22));
    return project(e2, model.sop);
  };
  auto decoded = [&]() {
    auto [s1, n1] = speech_branch();
    auto [s2, n2] = background_branch();
    RvqResult qs = rvq_encode_frozen(s1, model.srvq, frozen_s);
    RvqResult qn = rvq_encode_frozen(n2, model.nrvq, frozen_n);
    Tensor out = model.decoder_forward(add(qs.z, qn.z));
    return slice_rows(out, 0, n_samples);
  };

  struct Term {
    std::string name;
    std::function<Tensor()> fn;
    std::vector<std::string> scope;
  };
  std::vector<Term> terms;
  terms.push_back({"rst",
                   [&]() { return l1_loss(decoded(), target); },
                   {"enc.", "sop.", "dec."}});
  terms.push_back({"perp",
                   [&]() {
                     auto [s1, n1] = speech_branch();
                     auto [s2, n2] = background_branch();
                     return scale(add(orthogonality_loss(s1, n1),
                                      orthogonality_loss(s2, n2)),
                                  0.5);
                   },
                   {"enc.", "sop."}});
  terms.push_back({"sg",
                   [&]() {
                     auto [s1, n1] = speech_branch();
                     Tensor zc = add(s1, Tensor(sg_offset));
                     return sg_loss(zc, teacher_h, model.sg_head);
                   },
                   {"enc.", "sop.", "sg."}});
  terms.push_back({"recon",
                   [&]() { return mel_loss(decoded(), target.col(0), mel_plan); },
                   {"enc.", "sop.", "dec."}});
  terms.push_back({"commit",
                   [&]() {
                     auto [s1, n1] = speech_branch();
                     auto [s2, n2] = background_branch();
                     RvqResult qs = rvq_encode_frozen(s1, model.srvq, frozen_s);
                     RvqResult qn = rvq_encode_frozen(n2, model.nrvq, frozen_n);
                     return add(qs.commitment_loss, qn.commitment_loss);
                   },
                   {"enc.", "sop."}});
  terms.push_back({"codebook",
                   [&]() {
                     auto [s1, n1] = speech_branch();
                     auto [s2, n2] = background_branch();
                     RvqResult qs = rvq_encode_frozen(s1, model.srvq, frozen_s);
                     RvqResult qn = rvq_encode_frozen(n2, model.nrvq, frozen_n);
                     return add(qs.codebook_loss, qn.codebook_loss);
                   },
                   {"srvq.", "nrvq."}});

  auto params = model.parameters();
  std::vector<TermCheck> results;
  for (const Term& term : terms) {
    for (Parameter& p : params) p.tensor.zero_grad();
    Tensor loss = term.fn();
    if (!std::isfinite(loss.scalar()))
      throw std::runtime_error("gradcheck: non-finite " + term.name +
                               " at base point");
    loss.backward();

    TermCheck check;
    check.term = term.name;
    for (Parameter& p : params) {
      if (!name_in_scope(p.name, term.scope)) continue;
      const Eigen::MatrixXd analytic =
          p.tensor.has_grad() ? p.tensor.grad()
                              : Eigen::MatrixXd::Zero(p.tensor.rows(),
                                                      p.tensor.cols());
      Eigen::MatrixXd& value = p.tensor.mutable_value();
      for (Eigen::Index j = 0; j < value.size(); ++j) {
        const double orig = value(j);
        value(j) = orig + opt.eps;
        const double fp = term.fn().scalar();
        value(j) = orig - opt.eps;
        const double fm = term.fn().scalar();
        value(j) = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw std::runtime_error("gradcheck: non-finite " + term.name +
                                   " at probe of " + p.name);
        const double fd = (fp - fm) / (2.0 * opt.eps);
        const double a = analytic(j);
        if (std::abs(a - fd) < opt.atol) {
          ++check.coords_checked;
          continue;
        }
        const double rel =
            std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
        check.max_rel_err = std::max(check.max_rel_err, rel);
        ++check.coords_checked;
      }
    }
    check.pass = check.max_rel_err < opt.tol;
    results.push_back(check);
  }
  return results;
}

}  // namespace decodec
