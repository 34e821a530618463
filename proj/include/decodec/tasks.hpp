// Token-bundle recombination: reconstruction, speech enhancement, background
// extraction, one-shot voice conversion and VC+SE, plus reference-length
// alignment. Pure selection over input / reference / blank streams.

#pragma once

#include "decodec/codec.hpp"

#include <optional>
#include <string>

namespace decodec {

enum class Task {
  kReconstruction,
  kSpeechEnhancement,
  kBackgroundExtraction,
  kOneShotVc,
  kOneShotVcSe,
};

Task parse_task(const std::string& name);  // recon|se|bgs|vc|vcse
std::string task_name(Task t);

struct TaskSpec {
  Task task = Task::kReconstruction;
  TokenBundle input;
  std::optional<TokenBundle> reference;  // required for VC tasks
  TokenBundle blank;                     // from a zero waveform of equal length
};

// Truncate or circularly repeat frame rows to exactly target_frames.
TokenBundle align_reference(const TokenBundle& reference,
                            Eigen::Index target_frames);

// Stream selection:
//   Reconstruction:  input zc, zr, zb
//   SE:              input zc, zr + blank zb
//   BGS extraction:  blank zc, zr + input zb
//   one-shot VC:     input zc + reference zr + input zb
//   one-shot VC+SE:  input zc + reference zr + blank zb
TokenBundle recombine(const TaskSpec& spec);

Waveform run_task(const TaskSpec& spec, const DecodecModel& model,
                  Eigen::Index target_samples = -1);

}  // namespace decodec
