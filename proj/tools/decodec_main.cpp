// decodec command-line interface: train, encode, decode, recombine, eval,
// gradcheck. Configuration lives in key=value files for reproducibility;
// flags override config values.

#include "decodec/gradcheck.hpp"
#include "decodec/serial.hpp"
#include "decodec/tasks.hpp"
#include "decodec/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace decodec;

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

int cmd_train(const std::string& config_path,
              const std::optional<std::uint64_t>& seed_override,
              const std::optional<std::string>& out_override) {
  RunConfig rc = load_run_config(config_path);
  if (seed_override) {
    rc.model.seed = *seed_override;
    rc.trainer.seed = *seed_override;
  }
  if (out_override) rc.output_dir = *out_override;
  std::filesystem::create_directories(rc.output_dir);

  DecodecModel model(rc.model);
  CorpusConfig corpus = corpus_from(rc);
  SyntheticContentTeacher teacher(corpus.n_symbols, rc.model.teacher_dim,
                                  rc.model.seed);
  Trainer trainer(model, corpus, teacher, rc.trainer);

  std::ofstream log(join_path(rc.output_dir, "train_log.csv"));
  if (!log) {
    std::cerr << "cannot write to output dir: " << rc.output_dir << "\n";
    return 1;
  }
  trainer.run(&log, [&](long step) {
    write_checkpoint(
        join_path(rc.output_dir, "checkpoint_" + std::to_string(step) + ".dcck"),
        model);
  });
  write_checkpoint(join_path(rc.output_dir, "checkpoint_final.dcck"), model);
  std::cout << "trained " << rc.trainer.steps << " steps; checkpoint and log in "
            << rc.output_dir << "\n";
  return 0;
}

int cmd_encode(const std::string& ck, const std::string& wav_in,
               const std::string& tokens_out) {
  DecodecModel model = read_checkpoint(ck);
  Waveform x = read_wav(wav_in);
  EncodeResult enc = model.encode(x);
  write_token_file(tokens_out, enc.tokens, model.config());
  std::cout << "encoded " << x.length() << " samples to "
            << enc.tokens.frames() << " frames\n";
  return 0;
}

int cmd_decode(const std::string& ck, const std::string& tokens_in,
               const std::string& wav_out) {
  DecodecModel model = read_checkpoint(ck);
  TokenBundle tb = read_token_file(tokens_in);
  auto [zs, zn] = model.detokenize(tb);
  Waveform y = model.decode(zs, zn);
  write_wav(wav_out, y);
  std::cout << "decoded " << tb.frames() << " frames to " << y.length()
            << " samples\n";
  return 0;
}

int cmd_recombine(const std::string& ck, const std::string& task_name_str,
                  const std::string& tokens_in,
                  const std::optional<std::string>& reference_in,
                  const std::string& wav_out) {
  DecodecModel model = read_checkpoint(ck);
  TaskSpec spec;
  spec.task = parse_task(task_name_str);
  spec.input = read_token_file(tokens_in);
  if (spec.input.config_fingerprint != model.fingerprint())
    throw std::runtime_error("input tokens do not match this checkpoint");
  const bool needs_ref =
      spec.task == Task::kOneShotVc || spec.task == Task::kOneShotVcSe;
  if (needs_ref && !reference_in)
    throw std::runtime_error("task '" + task_name_str +
                             "' requires --reference tokens");
  if (reference_in) {
    TokenBundle ref = read_token_file(*reference_in);
    if (ref.config_fingerprint != model.fingerprint())
      throw std::runtime_error("reference tokens do not match this checkpoint");
    spec.reference = align_reference(ref, spec.input.frames());
  }
  spec.blank = model.blank_bundle(spec.input.frames());
  Waveform y = run_task(spec, model);
  write_wav(wav_out, y);
  std::cout << task_name_str << ": wrote " << y.length() << " samples\n";
  return 0;
}

int cmd_eval(const std::string& ck, const std::string& manifest,
             const std::string& csv_out, const std::string& sop_report_out) {
  DecodecModel model = read_checkpoint(ck);
  RunConfig rc = load_run_config(manifest);
  CorpusConfig corpus;
  corpus.sample_rate = model.config().sample_rate;
  corpus.samples_per_frame = model.config().hop();
  corpus.n_speakers = rc.corpus_speakers;
  SyntheticContentTeacher teacher(corpus.n_symbols, model.config().teacher_dim,
                                  model.config().seed);

  std::vector<EvalItem> items = make_eval_set(corpus, rc.eval_seed,
                                              rc.eval_items, rc.eval_snr,
                                              rc.eval_duration_s);
  EvalMetrics m = evaluate(model, items, teacher);

  std::ofstream csv(csv_out);
  if (!csv) throw std::runtime_error("cannot write " + csv_out);
  csv << "SDR_O,SDR_S,SDR_B,MEL_DIST,L_PERP,TOKEN_AGREE\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                m.sdr_o, m.sdr_s, m.sdr_b, m.mel_dist, m.l_perp, m.token_agree);
  csv << buf;

  if (!sop_report_out.empty()) {
    OrthogonalityReport rep = projector_orthogonality_report(model.sop);
    std::ofstream rf(sop_report_out);
    if (!rf) throw std::runtime_error("cannot write " + sop_report_out);
    rf << "mean_abs_cosine," << rep.mean_abs_cosine << "\n";
    rf << "cosine_histogram";
    for (double b : rep.cosine_histogram) rf << "," << b;
    rf << "\n";
    rf << "singular_values_s";
    for (Eigen::Index i = 0; i < rep.singular_values_s.size(); ++i)
      rf << "," << rep.singular_values_s(i);
    rf << "\n";
    rf << "singular_values_n";
    for (Eigen::Index i = 0; i < rep.singular_values_n.size(); ++i)
      rf << "," << rep.singular_values_n(i);
    rf << "\n";
  }
  std::cout << "SDR_O=" << m.sdr_o << " SDR_S=" << m.sdr_s
            << " SDR_B=" << m.sdr_b << " MEL_DIST=" << m.mel_dist
            << " L_PERP=" << m.l_perp << " TOKEN_AGREE=" << m.token_agree
            << "\n";
  return 0;
}

int cmd_gradcheck(const std::optional<std::string>& config_path) {
  ModelConfig cfg = toy_config();
  if (config_path) cfg = load_run_config(*config_path).model;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<TermCheck> checks = run_model_gradcheck(cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  bool all_pass = true;
  for (const TermCheck& c : checks) {
    std::printf("%-10s max_rel_err=%.3e coords=%ld %s\n", c.term.c_str(),
                c.max_rel_err, c.coords_checked, c.pass ? "PASS" : "FAIL");
    all_pass = all_pass && c.pass;
  }
  std::printf("gradcheck %s in %.1f s\n", all_pass ? "passed" : "FAILED", secs);
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeCodec: disentangled neural audio codec"};
  app.require_subcommand(1);

  std::string config_path, ck, in_path, out_path, ref_path, task_str;
  std::string manifest, csv_out, sop_report;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "run configuration")->required();
  train->add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  train->add_option("--output", out_dir, "override the output directory");

  auto* enc = app.add_subcommand("encode", "waveform to token file");
  enc->add_option("--checkpoint", ck)->required();
  enc->add_option("--in", in_path, "input wav")->required();
  enc->add_option("--out", out_path, "output token file")->required();

  auto* dec = app.add_subcommand("decode", "token file to waveform");
  dec->add_option("--checkpoint", ck)->required();
  dec->add_option("--in", in_path, "input token file")->required();
  dec->add_option("--out", out_path, "output wav")->required();

  auto* rec = app.add_subcommand("recombine", "token recombination tasks");
  rec->add_option("--checkpoint", ck)->required();
  rec->add_option("--task", task_str, "recon|se|bgs|vc|vcse")->required();
  rec->add_option("--in", in_path, "input token file")->required();
  rec->add_option("--reference", ref_path, "reference token file (vc, vcse)");
  rec->add_option("--out", out_path, "output wav")->required();

  auto* ev = app.add_subcommand("eval", "metrics on a synthetic manifest");
  ev->add_option("--checkpoint", ck)->required();
  ev->add_option("--manifest", manifest, "eval manifest config")->required();
  ev->add_option("--out", csv_out, "metrics CSV")->required();
  ev->add_option("--sop-report", sop_report, "projector diagnostics CSV");

  auto* gc = app.add_subcommand("gradcheck", "per-loss-term gradient check");
  gc->add_option("--config", config_path, "model config (default: toy model)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train)
      return cmd_train(config_path,
                       seed_set ? std::optional<std::uint64_t>(seed)
                                : std::nullopt,
                       out_dir.empty() ? std::nullopt
                                       : std::optional<std::string>(out_dir));
    if (*enc) return cmd_encode(ck, in_path, out_path);
    if (*dec) return cmd_decode(ck, in_path, out_path);
    if (*rec)
      return cmd_recombine(ck, task_str, in_path,
                           ref_path.empty()
                               ? std::nullopt
                               : std::optional<std::string>(ref_path),
                           out_path);
    if (*ev) return cmd_eval(ck, manifest, csv_out, sop_report);
    if (*gc)
      return cmd_gradcheck(config_path.empty()
                               ? std::nullopt
                               : std::optional<std::string>(config_path));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
