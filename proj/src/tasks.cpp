#include "decodec/tasks.hpp"

#include <stdexcept>

namespace decodec {

Task parse_task(const std::string& name) {
  if (name == "recon") return Task::kReconstruction;
  if (name == "se") return Task::kSpeechEnhancement;
  if (name == "bgs") return Task::kBackgroundExtraction;
  if (name == "vc") return Task::kOneShotVc;
  if (name == "vcse") return Task::kOneShotVcSe;
  throw std::invalid_argument("unknown task: " + name +
                              " (expected recon|se|bgs|vc|vcse)");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::kReconstruction: return "recon";
    case Task::kSpeechEnhancement: return "se";
    case Task::kBackgroundExtraction: return "bgs";
    case Task::kOneShotVc: return "vc";
    case Task::kOneShotVcSe: return "vcse";
  }
  return "?";
}

namespace {

Eigen::MatrixXi align_rows(const Eigen::MatrixXi& m, Eigen::Index target) {
  if (m.rows() == target) return m;
  Eigen::MatrixXi out(target, m.cols());
  for (Eigen::Index t = 0; t < target; ++t) out.row(t) = m.row(t % m.rows());
  return out;
}

}  // namespace

TokenBundle align_reference(const TokenBundle& reference,
                            Eigen::Index target_frames) {
  if (reference.frames() == 0)
    throw std::invalid_argument("align_reference: empty reference");
  TokenBundle out;
  out.zc = align_rows(reference.zc, target_frames);
  out.zr = align_rows(reference.zr, target_frames);
  out.zb = align_rows(reference.zb, target_frames);
  out.config_fingerprint = reference.config_fingerprint;
  return out;
}

TokenBundle recombine(const TaskSpec& spec) {
  const bool needs_reference =
      spec.task == Task::kOneShotVc || spec.task == Task::kOneShotVcSe;
  if (needs_reference && !spec.reference.has_value())
    throw std::invalid_argument("recombine: task requires a reference bundle");

  const Eigen::Index frames = spec.input.frames();
  if (spec.blank.frames() != frames)
    throw std::invalid_argument("recombine: blank frame count mismatch");
  if (needs_reference && spec.reference->frames() != frames)
    throw std::invalid_argument(
        "recombine: reference frame count mismatch (align first)");

  TokenBundle out;
  out.config_fingerprint = spec.input.config_fingerprint;
  switch (spec.task) {
    case Task::kReconstruction:
      out.zc = spec.input.zc; out.zr = spec.input.zr; out.zb = spec.input.zb;
      break;
    case Task::kSpeechEnhancement:
      out.zc = spec.input.zc; out.zr = spec.input.zr; out.zb = spec.blank.zb;
      break;
    case Task::kBackgroundExtraction:
      out.zc = spec.blank.zc; out.zr = spec.blank.zr; out.zb = spec.input.zb;
      break;
    case Task::kOneShotVc:
      out.zc = spec.input.zc; out.zr = spec.reference->zr; out.zb = spec.input.zb;
      break;
    case Task::kOneShotVcSe:
      out.zc = spec.input.zc; out.zr = spec.reference->zr; out.zb = spec.blank.zb;
      break;
  }
  return out;
}

Waveform run_task(const TaskSpec& spec, const DecodecModel& model,
                  Eigen::Index target_samples) {
  const TokenBundle mixed = recombine(spec);
  auto [zs, zn] = model.detokenize(mixed);
  return model.decode(zs, zn, target_samples);
}

}  // namespace decodec
