// Representation-swap training: paired-sample swapping, the weighted
// non-adversarial loss, AdamW with per-step decay, evaluation metrics, and
// the ablation matrix runner.

#pragma once

#include "decodec/codec.hpp"
#include "decodec/corpus.hpp"
#include "decodec/losses.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace decodec {

struct TrainPair {
  Waveform s1, n1, y11;
  Waveform s2, n2, y22;
  double snr1 = 0.0, snr2 = 0.0;
  SyntheticUtterance utt1;  // clean source of s1, feeds the teacher
};

// Backgrounds are pre-scaled so y_ii == s_i + n_i exactly. A degenerate pair
// (pair 2 == pair 1) turns the RST step into plain reconstruction of y11.
TrainPair make_train_pair(const CorpusConfig& cfg, std::uint64_t seed,
                          double duration_s, double snr_lo, double snr_hi,
                          bool degenerate);

struct LossBreakdown {
  Tensor rst;
  Tensor sg;
  Tensor perp;
  Tensor recon;
  Tensor codebook;
  Tensor commit;
};

struct LossValues {
  double rst = 0, sg = 0, perp = 0, recon = 0, codebook = 0, commit = 0;
  double perp_diag = 0;  // mean per-frame |cos(S_t, N_t)| on the batch
};

// One RST pass on the tape: encode both mixtures, project, quantize
// S1 / N2, decode the sum and score against s1 + n2.
LossBreakdown rst_step(const TrainPair& pair, DecodecModel& model,
                       const MelLossPlan& mel_plan,
                       const SemanticTeacher& teacher,
                       Eigen::MatrixXi* srvq_tokens = nullptr,
                       Eigen::MatrixXi* nrvq_tokens = nullptr);

Tensor total_loss(const LossBreakdown& breakdown, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Optimizer: decoupled-weight-decay adaptive moments, lr_t = lr0 * gamma^t.
// ---------------------------------------------------------------------------

struct AdamWOptions {
  double lr0 = 1e-4;
  double gamma = 0.999996;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

double lr_at_step(const AdamWOptions& opt, long step);

class AdamW {
 public:
  AdamW(std::vector<Parameter> params, AdamWOptions opt = {});

  void zero_grad();
  // Applies one update using each parameter's accumulated gradient (missing
  // gradients count as zero). Non-finite gradients skip the update and are
  // counted as anomalies.
  void step(long step_idx);

  long anomalies() const { return anomalies_; }
  const std::vector<Parameter>& params() const { return params_; }

 private:
  std::vector<Parameter> params_;
  AdamWOptions opt_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long anomalies_ = 0;
};

// Scales all gradients so the global norm is at most max_norm.
void clip_gradients(std::vector<Parameter>& params, double max_norm);

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct TrainerOptions {
  long steps = 1000;
  int batch_size = 8;
  double duration_s = 0.64;
  double snr_lo = -5.0;
  double snr_hi = 10.0;
  std::uint64_t seed = 1;
  bool use_swap = true;   // RST: alternate swapped/identical pairs 50/50
  bool use_perp = true;   // SOP orthogonality penalty
  bool use_sg = true;     // semantic guidance
  double clip_norm = 5.0;
  int dead_code_patience = 200;
  long checkpoint_every = 0;  // 0: never
  AdamWOptions adam;
};

struct TrainStepRecord {
  long step = 0;
  LossValues losses;
  double total = 0.0;
  double lr = 0.0;
  double codebook_entropy = 0.0;
};

class Trainer {
 public:
  Trainer(DecodecModel& model, const CorpusConfig& corpus,
          const SemanticTeacher& teacher, TrainerOptions opt);

  // Runs all steps. If log is non-null, writes one CSV row per step. The
  // checkpoint callback fires every checkpoint_every steps.
  void run(std::ostream* log = nullptr,
           const std::function<void(long)>& on_checkpoint = nullptr);

  TrainStepRecord step_once();
  const std::vector<TrainStepRecord>& history() const { return history_; }
  static void write_csv_header(std::ostream& os);
  static void write_csv_row(std::ostream& os, const TrainStepRecord& r);

 private:
  DecodecModel& model_;
  CorpusConfig corpus_;
  const SemanticTeacher& teacher_;
  TrainerOptions opt_;
  MelLossPlan mel_plan_;
  AdamW adam_;
  Rng rng_;
  long step_ = 0;
  std::vector<TrainStepRecord> history_;
};

// ---------------------------------------------------------------------------
// Evaluation and ablations
// ---------------------------------------------------------------------------

struct EvalItem {
  Waveform s, n, y;
  SyntheticUtterance utt;
};

std::vector<EvalItem> make_eval_set(const CorpusConfig& cfg, std::uint64_t seed,
                                    int count, double snr_db,
                                    double duration_s);

struct EvalMetrics {
  double sdr_o = 0;        // reconstruction of y
  double sdr_s = 0;        // decode(Zs, 0) against s
  double sdr_b = 0;        // decode(0, Zn) against n
  double mel_dist = 0;     // mel distance of the reconstruction
  double l_perp = 0;       // mean per-frame |cos(S_t, N_t)|
  double token_agree = 0;  // Zc agreement between clean s and the mixture
  double sg_cos = 0;       // mean cos(W Zc, H) against the teacher
};

EvalMetrics evaluate(DecodecModel& model, const std::vector<EvalItem>& items,
                     const SemanticTeacher& teacher);

struct AblationVariant {
  std::string name;
  bool sop = false;  // orthogonality penalty active
  bool rst = false;  // swapped pairs active
  bool sg = false;   // semantic guidance active
};

struct AblationRow {
  AblationVariant variant;
  EvalMetrics untrained;
  EvalMetrics trained;
};

// Trains each variant from the same seed and corpus, then evaluates on an
// identical held-out set.
std::vector<AblationRow> run_ablation(const ModelConfig& base,
                                      const CorpusConfig& corpus,
                                      const std::vector<AblationVariant>& matrix,
                                      const TrainerOptions& budget,
                                      int eval_items, double eval_snr);

}  // namespace decodec
