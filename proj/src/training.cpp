#include "decodec/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <stdexcept>

namespace decodec {

TrainPair make_train_pair(const CorpusConfig& cfg, std::uint64_t seed,
                          double duration_s, double snr_lo, double snr_hi,
                          bool degenerate) {
  Rng rng(Rng::mix(seed, 0x9a12));

  auto sample_side = [&](std::uint64_t salt, SyntheticUtterance* utt_out,
                         Waveform* s, Waveform* n, Waveform* y, double* snr) {
    SyntheticUtterance utt =
        generate_utterance(cfg, Rng::mix(seed, salt), duration_s);
    Waveform bg = generate_background(cfg, Rng::mix(seed, salt ^ 0xb6), duration_s);
    *snr = snr_lo + (snr_hi - snr_lo) * rng.uniform();
    // Scale the background once so y == s + n holds exactly.
    const double ps = power(utt.waveform);
    const double pn = power(bg);
    const double alpha = std::sqrt(ps / (pn * std::pow(10.0, *snr / 10.0)));
    bg.samples *= alpha;
    *s = utt.waveform;
    *n = bg;
    y->sample_rate = cfg.sample_rate;
    y->samples = s->samples + n->samples;
    if (utt_out) *utt_out = std::move(utt);
  };

  TrainPair pair;
  sample_side(0x01, &pair.utt1, &pair.s1, &pair.n1, &pair.y11, &pair.snr1);
  if (degenerate) {
    pair.s2 = pair.s1;
    pair.n2 = pair.n1;
    pair.y22 = pair.y11;
    pair.snr2 = pair.snr1;
  } else {
    sample_side(0x02, nullptr, &pair.s2, &pair.n2, &pair.y22, &pair.snr2);
  }
  return pair;
}

LossBreakdown rst_step(const TrainPair& pair, DecodecModel& model,
                       const MelLossPlan& mel_plan,
                       const SemanticTeacher& teacher,
                       Eigen::MatrixXi* srvq_tokens,
                       Eigen::MatrixXi* nrvq_tokens) {
  if (pair.y11.length() != pair.y22.length())
    throw std::invalid_argument("rst_step: pair lengths differ");
  const bool identical =
      pair.y11.samples.data() == pair.y22.samples.data() ||
      pair.y11.samples == pair.y22.samples;

  Tensor y11_in(Eigen::MatrixXd(pad_to_hop(pair.y11.samples, model.config().hop())));
  Tensor enc1 = model.encoder_forward(y11_in);
  auto [s1, n1] = project(enc1, model.sop);

  Tensor s_branch = s1;
  Tensor n_branch;
  Tensor perp;
  if (identical) {
    n_branch = n1;
    perp = orthogonality_loss(s1, n1);
  } else {
    Tensor y22_in(
        Eigen::MatrixXd(pad_to_hop(pair.y22.samples, model.config().hop())));
    Tensor enc2 = model.encoder_forward(y22_in);
    auto [s2, n2] = project(enc2, model.sop);
    n_branch = n2;
    perp = scale(add(orthogonality_loss(s1, n1), orthogonality_loss(s2, n2)), 0.5);
  }

  RvqResult qs = rvq_encode(s_branch, model.srvq);
  RvqResult qn = rvq_encode(n_branch, model.nrvq);
  if (srvq_tokens) *srvq_tokens = qs.tokens;
  if (nrvq_tokens) *nrvq_tokens = qn.tokens;

  Tensor decoded = model.decoder_forward(add(qs.z, qn.z));
  Eigen::MatrixXd target = pair.s1.samples + pair.n2.samples;
  Tensor yhat = slice_rows(decoded, 0, target.rows());

  LossBreakdown b;
  b.rst = l1_loss(yhat, target);
  b.recon = mel_loss(yhat, target.col(0), mel_plan);
  b.perp = perp;
  // Teacher consumes the clean source of pair 1, never the mixture. Zc is
  // the straight-through stage-1 output of the speech branch.
  std::vector<int> zc_idx(static_cast<size_t>(qs.tokens.rows()));
  for (Eigen::Index t = 0; t < qs.tokens.rows(); ++t)
    zc_idx[static_cast<size_t>(t)] = qs.tokens(t, 0);
  Tensor q1 = gather_rows(model.srvq.stages[0].entries, zc_idx);
  Tensor zc_st = add(s_branch, sub(stopgrad(q1), stopgrad(s_branch)));
  b.sg = sg_loss(zc_st, teacher.produce(pair.utt1), model.sg_head);
  b.codebook = add(qs.codebook_loss, qn.codebook_loss);
  b.commit = scale(add(qs.commitment_loss, qn.commitment_loss),
                   model.srvq.commitment_beta);
  return b;
}

Tensor total_loss(const LossBreakdown& b, const LossWeights& w) {
  Tensor total = scale(b.rst, w.w_rst);
  total = add(total, scale(b.sg, w.w_sg));
  total = add(total, scale(b.perp, w.w_perp));
  total = add(total, scale(b.recon, w.w_recon));
  total = add(total, scale(b.codebook, w.w_codebook));
  total = add(total, scale(b.commit, w.w_commit));
  return total;
}

double lr_at_step(const AdamWOptions& opt, long step) {
  return opt.lr0 * std::pow(opt.gamma, static_cast<double>(step));
}

AdamW::AdamW(std::vector<Parameter> params, AdamWOptions opt)
    : params_(std::move(params)), opt_(opt) {
  for (const Parameter& p : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

void AdamW::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

void AdamW::step(long step_idx) {
  // Validate first: a non-finite gradient anywhere skips the whole update.
  for (const Parameter& p : params_) {
    if (!p.tensor.has_grad()) continue;
    if (!p.tensor.grad().allFinite()) {
      ++anomalies_;
      return;
    }
  }
  const double lr = lr_at_step(opt_, step_idx);
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_idx) + 1.0);
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_idx) + 1.0);
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    const Eigen::MatrixXd g = t.has_grad()
                                  ? t.grad()
                                  : Eigen::MatrixXd::Zero(t.rows(), t.cols());
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    const Eigen::MatrixXd mhat = m_[i] / bc1;
    const Eigen::MatrixXd vhat = v_[i] / bc2;
    t.mutable_value() -=
        lr * (mhat.array() / (vhat.array().sqrt() + opt_.eps)).matrix();
    t.mutable_value() -= lr * opt_.weight_decay * t.mutable_value();
  }
}

void clip_gradients(std::vector<Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter& p : params)
    if (p.tensor.has_grad()) sq += p.tensor.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (Parameter& p : params)
    if (p.tensor.has_grad()) p.tensor.node()->grad *= s;
}

namespace {

// The pinned zero codeword must stay exactly zero: drop its gradient.
void mask_pinned_rows(RvqStack& stack) {
  for (Codebook& cb : stack.stages)
    if (cb.entries.has_grad()) cb.entries.node()->grad.row(0).setZero();
}

}  // namespace

Trainer::Trainer(DecodecModel& model, const CorpusConfig& corpus,
                 const SemanticTeacher& teacher, TrainerOptions opt)
    : model_(model),
      corpus_(corpus),
      teacher_(teacher),
      opt_(opt),
      mel_plan_(make_mel_loss_plan(model.config().sample_rate,
                                   model.config().mel_scales,
                                   model.config().mel_bands)),
      adam_(model.parameters(), opt.adam),
      rng_(Rng::mix(opt.seed, 0x7a11)) {}

TrainStepRecord Trainer::step_once() {
  adam_.zero_grad();

  // Even steps swap, odd steps reconstruct the same pair, so both halves of
  // the decoupling argument are trained explicitly.
  const bool degenerate = !opt_.use_swap || (step_ % 2 == 1);

  Tensor batch_total = Tensor::scalar_of(0.0);
  LossValues vals;
  LossWeights w = model_.config().loss_weights;
  if (!opt_.use_perp) w.w_perp = 0.0;
  if (!opt_.use_sg) w.w_sg = 0.0;

  Eigen::MatrixXd residual_pool;
  for (int bi = 0; bi < opt_.batch_size; ++bi) {
    const std::uint64_t pair_seed =
        Rng::mix(opt_.seed, 0xda7a0000ULL + static_cast<std::uint64_t>(step_) *
                                                 1024ULL +
                                static_cast<std::uint64_t>(bi));
    TrainPair pair = make_train_pair(corpus_, pair_seed, opt_.duration_s,
                                     opt_.snr_lo, opt_.snr_hi, degenerate);
    Eigen::MatrixXi tok_s, tok_n;
    LossBreakdown b = rst_step(pair, model_, mel_plan_, teacher_, &tok_s, &tok_n);
    record_usage(model_.srvq, tok_s);
    record_usage(model_.nrvq, tok_n);

    vals.rst += b.rst.scalar();
    vals.sg += b.sg.scalar();
    vals.perp += b.perp.scalar();
    vals.recon += b.recon.scalar();
    vals.codebook += b.codebook.scalar();
    vals.commit += b.commit.scalar();
    batch_total = add(batch_total, total_loss(b, w));

    if (bi == 0) {
      // Cosine diagnostic and the reseed pool come from the first item.
      Tensor y_in(Eigen::MatrixXd(
          pad_to_hop(pair.y11.samples, model_.config().hop())));
      Eigen::MatrixXd y_val = model_.encoder_forward(y_in).value();
      Eigen::MatrixXd s_val = y_val * model_.sop.p_s.value().transpose();
      Eigen::MatrixXd n_val = y_val * model_.sop.p_n.value().transpose();
      vals.perp_diag = mean_abs_frame_cosine(s_val, n_val);
      residual_pool = s_val;
    }
  }
  const double inv_b = 1.0 / static_cast<double>(opt_.batch_size);
  vals.rst *= inv_b; vals.sg *= inv_b; vals.perp *= inv_b;
  vals.recon *= inv_b; vals.codebook *= inv_b; vals.commit *= inv_b;
  Tensor loss = scale(batch_total, inv_b);

  TrainStepRecord rec;
  rec.step = step_;
  rec.losses = vals;
  rec.total = loss.scalar();
  rec.lr = lr_at_step(opt_.adam, step_);

  if (!std::isfinite(rec.total)) {
    std::cerr << "step " << step_ << ": non-finite loss "
              << "(rst=" << vals.rst << " sg=" << vals.sg
              << " perp=" << vals.perp << " recon=" << vals.recon
              << " cb=" << vals.codebook << " commit=" << vals.commit
              << "), step skipped\n";
    ++step_;
    rec.codebook_entropy = usage_entropy(model_.srvq);
    history_.push_back(rec);
    return rec;
  }

  loss.backward();
  mask_pinned_rows(model_.srvq);
  mask_pinned_rows(model_.nrvq);
  {
    auto params = model_.parameters();
    clip_gradients(params, opt_.clip_norm);
  }
  adam_.step(step_);

  reseed_dead_entries(model_.srvq, residual_pool, opt_.dead_code_patience, rng_);
  reseed_dead_entries(model_.nrvq, residual_pool, opt_.dead_code_patience, rng_);

  rec.codebook_entropy = usage_entropy(model_.srvq);
  history_.push_back(rec);
  ++step_;
  return rec;
}

void Trainer::write_csv_header(std::ostream& os) {
  os << "step,rst,sg,perp,recon,codebook,commit,total,lr,perp_diag,"
        "codebook_entropy\n";
}

void Trainer::write_csv_row(std::ostream& os, const TrainStepRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                "%.17g\n",
                r.step, r.losses.rst, r.losses.sg, r.losses.perp,
                r.losses.recon, r.losses.codebook, r.losses.commit, r.total,
                r.lr, r.losses.perp_diag, r.codebook_entropy);
  os << buf;
}

void Trainer::run(std::ostream* log,
                  const std::function<void(long)>& on_checkpoint) {
  if (log) write_csv_header(*log);
  for (long i = 0; i < opt_.steps; ++i) {
    TrainStepRecord rec = step_once();
    if (log) write_csv_row(*log, rec);
    if (opt_.checkpoint_every > 0 && (i + 1) % opt_.checkpoint_every == 0 &&
        on_checkpoint)
      on_checkpoint(i + 1);
  }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::vector<EvalItem> make_eval_set(const CorpusConfig& cfg, std::uint64_t seed,
                                    int count, double snr_db,
                                    double duration_s) {
  std::vector<EvalItem> items;
  items.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = Rng::mix(seed, 0xe7a1ULL + static_cast<std::uint64_t>(i));
    EvalItem item;
    item.utt = generate_utterance(cfg, s, duration_s);
    item.s = item.utt.waveform;
    Waveform bg = generate_background(cfg, Rng::mix(s, 0xb6), duration_s);
    const double alpha = std::sqrt(
        power(item.s) / (power(bg) * std::pow(10.0, snr_db / 10.0)));
    bg.samples *= alpha;
    item.n = bg;
    item.y.sample_rate = cfg.sample_rate;
    item.y.samples = item.s.samples + item.n.samples;
    items.push_back(std::move(item));
  }
  return items;
}

EvalMetrics evaluate(DecodecModel& model, const std::vector<EvalItem>& items,
                     const SemanticTeacher& teacher) {
  EvalMetrics m;
  if (items.empty()) return m;
  const std::vector<int>& scales = model.config().mel_scales;

  for (const EvalItem& item : items) {
    EncodeResult enc = model.encode(item.y);
    const Eigen::Index len = item.y.length();
    Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(enc.zs.rows(), enc.zs.cols());

    Waveform recon = model.decode(enc.zs, enc.zn, len);
    Waveform speech = model.decode(enc.zs, zeros, len);
    Waveform background = model.decode(zeros, enc.zn, len);

    m.sdr_o += sdr(item.y, recon);
    m.sdr_s += sdr(item.s, speech);
    m.sdr_b += sdr(item.n, background);
    m.mel_dist += mel_distance(item.y, recon, scales, model.config().mel_bands);
    m.l_perp += mean_abs_frame_cosine(enc.s, enc.n);

    EncodeResult clean = model.encode(item.s);
    Eigen::Index agree = 0;
    for (Eigen::Index t = 0; t < enc.tokens.zc.rows(); ++t)
      if (enc.tokens.zc(t, 0) == clean.tokens.zc(t, 0)) ++agree;
    m.token_agree +=
        static_cast<double>(agree) / static_cast<double>(enc.tokens.zc.rows());

    // Teacher alignment of the mixture's semantic stage.
    Eigen::MatrixXd h = teacher.produce(item.utt);
    const Eigen::MatrixXd& stage1 = model.srvq.stages[0].entries.value();
    Eigen::MatrixXd zc_q(enc.tokens.zc.rows(), stage1.cols());
    for (Eigen::Index t = 0; t < enc.tokens.zc.rows(); ++t)
      zc_q.row(t) = stage1.row(enc.tokens.zc(t, 0));
    Eigen::MatrixXd proj = zc_q * model.sg_head.w.value().transpose();
    double cos_acc = 0.0;
    for (Eigen::Index t = 0; t < proj.rows(); ++t) {
      const double np = proj.row(t).norm();
      const double nh = h.row(t).norm();
      cos_acc += (np > 0 && nh > 0) ? proj.row(t).dot(h.row(t)) / (np * nh) : 0.0;
    }
    m.sg_cos += cos_acc / static_cast<double>(proj.rows());
  }
  const double inv = 1.0 / static_cast<double>(items.size());
  m.sdr_o *= inv; m.sdr_s *= inv; m.sdr_b *= inv; m.mel_dist *= inv;
  m.l_perp *= inv; m.token_agree *= inv; m.sg_cos *= inv;
  return m;
}

std::vector<AblationRow> run_ablation(const ModelConfig& base,
                                      const CorpusConfig& corpus,
                                      const std::vector<AblationVariant>& matrix,
                                      const TrainerOptions& budget,
                                      int eval_items, double eval_snr) {
  std::vector<AblationRow> rows;
  // Held-out seed derives from the budget seed but cannot collide with
  // training pair seeds (distinct mix salt).
  const std::vector<EvalItem> eval_set =
      make_eval_set(corpus, Rng::mix(budget.seed, 0xeva1), eval_items, eval_snr,
                    budget.duration_s);

  for (const AblationVariant& variant : matrix) {
    DecodecModel model(base);
    SyntheticContentTeacher teacher(corpus.n_symbols, base.teacher_dim,
                                    base.seed);
    AblationRow row;
    row.variant = variant;
    row.untrained = evaluate(model, eval_set, teacher);

    TrainerOptions opt = budget;
    opt.use_swap = variant.rst;
    opt.use_perp = variant.sop;
    opt.use_sg = variant.sg;
    Trainer trainer(model, corpus, teacher, opt);
    trainer.run();

    row.trained = evaluate(model, eval_set, teacher);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace decodec
