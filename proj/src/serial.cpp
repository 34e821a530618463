#include "decodec/serial.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace decodec {

namespace {

void put_bytes(std::ostream& f, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i)
    f.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_bytes(std::istream& f, int n, std::uint64_t offset,
                        const std::string& what) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = f.get();
    if (c == EOF)
      throw std::runtime_error("token file truncated: missing bytes [" +
                               std::to_string(offset + i) + ".." +
                               std::to_string(offset + n) + ") while reading " +
                               what);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

int token_bytes_per_index(int codebook_size) {
  int bytes = 1;
  while ((1LL << (8 * bytes)) < codebook_size) ++bytes;
  return bytes;
}

void write_token_file(const std::string& path, const TokenBundle& tb,
                      const ModelConfig& cfg) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_token_file: cannot open " + path);
  f.write("DCTK", 4);
  put_bytes(f, 1, 2);  // version
  put_bytes(f, static_cast<std::uint64_t>(cfg.sample_rate), 4);
  put_bytes(f, static_cast<std::uint64_t>(tb.frames()), 4);
  put_bytes(f, cfg.strides.size(), 2);
  for (int s : cfg.strides) put_bytes(f, static_cast<std::uint64_t>(s), 2);
  put_bytes(f, static_cast<std::uint64_t>(cfg.k_s), 2);
  put_bytes(f, static_cast<std::uint64_t>(cfg.k_n), 2);
  put_bytes(f, static_cast<std::uint64_t>(cfg.codebook_size), 2);
  put_bytes(f, tb.config_fingerprint, 8);

  const int bpi = token_bytes_per_index(cfg.codebook_size);
  for (Eigen::Index t = 0; t < tb.frames(); ++t) {
    put_bytes(f, static_cast<std::uint64_t>(tb.zc(t, 0)), bpi);
    for (Eigen::Index k = 0; k < tb.zr.cols(); ++k)
      put_bytes(f, static_cast<std::uint64_t>(tb.zr(t, k)), bpi);
    for (Eigen::Index k = 0; k < tb.zb.cols(); ++k)
      put_bytes(f, static_cast<std::uint64_t>(tb.zb(t, k)), bpi);
  }
  if (!f) throw std::runtime_error("write_token_file: write failed: " + path);
}

TokenBundle read_token_file(const std::string& path, TokenFileHeader* header) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_token_file: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::strncmp(magic, "DCTK", 4) != 0)
    throw std::runtime_error("read_token_file: bad magic (bytes [0..4)) in " +
                             path);
  std::uint64_t off = 4;
  TokenFileHeader h;
  h.version = static_cast<std::uint16_t>(get_bytes(f, 2, off, "version")); off += 2;
  if (h.version != 1)
    throw std::runtime_error("read_token_file: unsupported version " +
                             std::to_string(h.version));
  h.sample_rate = static_cast<std::uint32_t>(get_bytes(f, 4, off, "sample_rate")); off += 4;
  h.frame_count = static_cast<std::uint32_t>(get_bytes(f, 4, off, "frame_count")); off += 4;
  const int n_strides = static_cast<int>(get_bytes(f, 2, off, "stride count")); off += 2;
  for (int i = 0; i < n_strides; ++i) {
    h.strides.push_back(static_cast<int>(get_bytes(f, 2, off, "stride"))); off += 2;
  }
  h.k_s = static_cast<std::uint16_t>(get_bytes(f, 2, off, "k_s")); off += 2;
  h.k_n = static_cast<std::uint16_t>(get_bytes(f, 2, off, "k_n")); off += 2;
  h.codebook_size = static_cast<std::uint16_t>(get_bytes(f, 2, off, "codebook_size")); off += 2;
  h.config_fingerprint = get_bytes(f, 8, off, "fingerprint"); off += 8;
  if (h.k_s < 1 || h.k_n < 1 || h.codebook_size < 2)
    throw std::runtime_error("read_token_file: invalid header fields");

  const int bpi = token_bytes_per_index(h.codebook_size);
  const Eigen::Index frames = h.frame_count;
  TokenBundle tb;
  tb.zc.resize(frames, 1);
  tb.zr.resize(frames, h.k_s - 1);
  tb.zb.resize(frames, h.k_n);
  tb.config_fingerprint = h.config_fingerprint;
  for (Eigen::Index t = 0; t < frames; ++t) {
    tb.zc(t, 0) = static_cast<int>(get_bytes(f, bpi, off, "zc payload")); off += bpi;
    for (Eigen::Index k = 0; k < tb.zr.cols(); ++k) {
      tb.zr(t, k) = static_cast<int>(get_bytes(f, bpi, off, "zr payload")); off += bpi;
    }
    for (Eigen::Index k = 0; k < tb.zb.cols(); ++k) {
      tb.zb(t, k) = static_cast<int>(get_bytes(f, bpi, off, "zb payload")); off += bpi;
    }
  }
  if (header) *header = h;
  return tb;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void write_checkpoint(const std::string& path, DecodecModel& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_checkpoint: cannot open " + path);
  f.write("DCCK", 4);
  put_bytes(f, 1, 2);
  const std::string conf = serialize_config(model.config());
  put_bytes(f, conf.size(), 4);
  f.write(conf.data(), static_cast<std::streamsize>(conf.size()));
  const auto params = model.parameters();
  put_bytes(f, params.size(), 4);
  for (const Parameter& p : params) {
    put_bytes(f, p.name.size(), 2);
    f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Eigen::MatrixXd& m = p.tensor.value();
    put_bytes(f, static_cast<std::uint64_t>(m.rows()), 4);
    put_bytes(f, static_cast<std::uint64_t>(m.cols()), 4);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::uint64_t bits;
        const double d = m(r, c);
        std::memcpy(&bits, &d, 8);
        put_bytes(f, bits, 8);
      }
    }
  }
  if (!f) throw std::runtime_error("write_checkpoint: write failed: " + path);
}

DecodecModel read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::strncmp(magic, "DCCK", 4) != 0)
    throw std::runtime_error("read_checkpoint: bad magic in " + path);
  std::uint64_t off = 4;
  const std::uint16_t version =
      static_cast<std::uint16_t>(get_bytes(f, 2, off, "version"));
  off += 2;
  if (version != 1)
    throw std::runtime_error("read_checkpoint: unsupported version");
  const std::uint32_t conf_len =
      static_cast<std::uint32_t>(get_bytes(f, 4, off, "config length"));
  off += 4;
  std::string conf(conf_len, '\0');
  f.read(conf.data(), conf_len);
  if (f.gcount() != static_cast<std::streamsize>(conf_len))
    throw std::runtime_error("read_checkpoint: truncated config block");
  off += conf_len;

  RunConfig rc = parse_run_config(conf);
  DecodecModel model(rc.model);
  auto params = model.parameters();

  const std::uint32_t count =
      static_cast<std::uint32_t>(get_bytes(f, 4, off, "parameter count"));
  off += 4;
  if (count != params.size())
    throw std::runtime_error("read_checkpoint: parameter count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len =
        static_cast<std::uint16_t>(get_bytes(f, 2, off, "name length"));
    off += 2;
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    off += name_len;
    if (name != params[i].name)
      throw std::runtime_error("read_checkpoint: parameter order mismatch at " +
                               name);
    const Eigen::Index rows =
        static_cast<Eigen::Index>(get_bytes(f, 4, off, "rows"));
    off += 4;
    const Eigen::Index cols =
        static_cast<Eigen::Index>(get_bytes(f, 4, off, "cols"));
    off += 4;
    Eigen::MatrixXd& m = params[i].tensor.mutable_value();
    if (m.rows() != rows || m.cols() != cols)
      throw std::runtime_error("read_checkpoint: shape mismatch at " + name);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        const std::uint64_t bits = get_bytes(f, 8, off, "parameter data");
        off += 8;
        double d;
        std::memcpy(&d, &bits, 8);
        m(r, c) = d;
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

namespace {

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("expected boolean, got '" + v + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string s) {
      const size_t x = s.find_first_not_of(" \t");
      const size_t y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    key = strip(key);
    val = strip(val);

    ModelConfig& m = rc.model;
    TrainerOptions& t = rc.trainer;
    if (key == "sample_rate") m.sample_rate = std::stoi(val);
    else if (key == "strides") m.strides = parse_int_list(val);
    else if (key == "stem_channels") m.stem_channels = std::stoi(val);
    else if (key == "embed_dim") m.embed_dim = std::stoi(val);
    else if (key == "kernel") m.kernel = std::stoi(val);
    else if (key == "decoder_dim") m.decoder_dim = std::stoi(val);
    else if (key == "k_s") m.k_s = std::stoi(val);
    else if (key == "k_n") m.k_n = std::stoi(val);
    else if (key == "codebook_size") m.codebook_size = std::stoi(val);
    else if (key == "causal") m.causal = parse_bool(val);
    else if (key == "seed") { m.seed = std::stoull(val); t.seed = m.seed; }
    else if (key == "teacher_dim") m.teacher_dim = std::stoi(val);
    else if (key == "mel_scales") m.mel_scales = parse_int_list(val);
    else if (key == "mel_bands") m.mel_bands = std::stoi(val);
    else if (key == "w_rst") m.loss_weights.w_rst = std::stod(val);
    else if (key == "w_sg") m.loss_weights.w_sg = std::stod(val);
    else if (key == "w_perp") m.loss_weights.w_perp = std::stod(val);
    else if (key == "w_recon") m.loss_weights.w_recon = std::stod(val);
    else if (key == "w_codebook") m.loss_weights.w_codebook = std::stod(val);
    else if (key == "w_commit") m.loss_weights.w_commit = std::stod(val);
    else if (key == "steps") t.steps = std::stol(val);
    else if (key == "batch_size") t.batch_size = std::stoi(val);
    else if (key == "duration_s") t.duration_s = std::stod(val);
    else if (key == "snr_lo") t.snr_lo = std::stod(val);
    else if (key == "snr_hi") t.snr_hi = std::stod(val);
    else if (key == "use_rst") t.use_swap = parse_bool(val);
    else if (key == "use_perp") t.use_perp = parse_bool(val);
    else if (key == "use_sg") t.use_sg = parse_bool(val);
    else if (key == "clip_norm") t.clip_norm = std::stod(val);
    else if (key == "dead_code_patience") t.dead_code_patience = std::stoi(val);
    else if (key == "checkpoint_every") t.checkpoint_every = std::stol(val);
    else if (key == "lr") t.adam.lr0 = std::stod(val);
    else if (key == "lr_gamma") t.adam.gamma = std::stod(val);
    else if (key == "weight_decay") t.adam.weight_decay = std::stod(val);
    else if (key == "corpus_speakers") rc.corpus_speakers = std::stoi(val);
    else if (key == "eval_items") rc.eval_items = std::stoi(val);
    else if (key == "eval_snr") rc.eval_snr = std::stod(val);
    else if (key == "eval_seed") rc.eval_seed = std::stoull(val);
    else if (key == "eval_duration_s") rc.eval_duration_s = std::stod(val);
    else if (key == "output_dir") rc.output_dir = val;
    else throw std::invalid_argument("unknown config key: " + key);
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

CorpusConfig corpus_from(const RunConfig& rc) {
  CorpusConfig cfg;
  cfg.sample_rate = rc.model.sample_rate;
  cfg.samples_per_frame = rc.model.hop();
  cfg.n_speakers = rc.corpus_speakers;
  return cfg;
}

}  // namespace decodec
