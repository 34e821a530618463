// On-disk formats: DCTK token files, DCCK checkpoints, and the plain-text
// key=value run configuration. All multi-byte fields are little-endian
// regardless of host.

#pragma once

#include "decodec/codec.hpp"
#include "decodec/training.hpp"

#include <cstdint>
#include <string>

namespace decodec {

struct TokenFileHeader {
  std::uint16_t version = 1;
  std::uint32_t sample_rate = 0;
  std::uint32_t frame_count = 0;
  std::vector<int> strides;
  std::uint16_t k_s = 0;
  std::uint16_t k_n = 0;
  std::uint16_t codebook_size = 0;
  std::uint64_t config_fingerprint = 0;
};

// ceil(log2(codebook_size) / 8)
int token_bytes_per_index(int codebook_size);

void write_token_file(const std::string& path, const TokenBundle& tb,
                      const ModelConfig& cfg);
// Returns the bundle and fills header when non-null. Truncation and magic
// mismatches throw with the offending byte range in the message.
TokenBundle read_token_file(const std::string& path,
                            TokenFileHeader* header = nullptr);

void write_checkpoint(const std::string& path, DecodecModel& model);
// Rebuilds the model from the embedded config, then overwrites parameters.
DecodecModel read_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Run configuration: key=value lines, '#' comments, unknown keys rejected.
// ---------------------------------------------------------------------------

struct RunConfig {
  ModelConfig model;
  TrainerOptions trainer;
  int corpus_speakers = 32;
  // Evaluation manifest fields.
  int eval_items = 32;
  double eval_snr = 0.0;
  std::uint64_t eval_seed = 77;
  double eval_duration_s = 0.64;
  std::string output_dir = ".";
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
CorpusConfig corpus_from(const RunConfig& rc);

}  // namespace decodec
