#include "decodec/codec.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace decodec {

namespace {

// The smooth pointwise nonlinearity used inside every encoder/decoder block.
Tensor block_activation(const Tensor& x) { return tanh_op(x); }

ConvLayer make_conv(Eigen::Index cin, Eigen::Index cout, int kernel, int stride,
                    Rng& rng) {
  ConvLayer l;
  l.kernel = kernel;
  l.stride = stride;
  l.w = Tensor(init_uniform(cin * kernel, cout, cin * kernel, rng),
               /*requires_grad=*/true);
  l.b = Tensor(Eigen::MatrixXd::Zero(1, cout), /*requires_grad=*/true);
  return l;
}

// Transposed layer mapping cin -> cout channels; weight keeps the adjoint
// conv's (cout*K) x cin layout.
ConvLayer make_conv_transposed(Eigen::Index cin, Eigen::Index cout, int kernel,
                               int stride, Rng& rng) {
  ConvLayer l;
  l.kernel = kernel;
  l.stride = stride;
  l.w = Tensor(init_uniform(cout * kernel, cin, cin * kernel, rng),
               /*requires_grad=*/true);
  l.b = Tensor(Eigen::MatrixXd::Zero(1, cout), /*requires_grad=*/true);
  return l;
}

LstmCell<double> make_lstm(Eigen::Index in, Eigen::Index hidden, Rng& rng) {
  LstmCell<double> c;
  c.wx = Tensor(init_uniform(in, 4 * hidden, in, rng), true);
  c.wh = Tensor(init_uniform(hidden, 4 * hidden, hidden, rng), true);
  c.b = Tensor(Eigen::MatrixXd::Zero(1, 4 * hidden), true);
  return c;
}

}  // namespace

int ModelConfig::frame_rate() const {
  const int h = hop();
  if (h <= 0 || sample_rate % h != 0)
    throw std::invalid_argument(
        "ModelConfig: sample_rate must be a multiple of the stride product");
  return sample_rate / h;
}

void ModelConfig::validate() const {
  frame_rate();
  if (strides.empty()) throw std::invalid_argument("ModelConfig: no strides");
  if (k_s < 2) throw std::invalid_argument("ModelConfig: K_s must be >= 2");
  if (k_n < 1) throw std::invalid_argument("ModelConfig: K_n must be >= 1");
  if (codebook_size < 2)
    throw std::invalid_argument("ModelConfig: codebook_size must be >= 2");
  if (kernel < 1 || stem_channels < 1 || embed_dim < 1 || decoder_dim < 1)
    throw std::invalid_argument("ModelConfig: bad channel geometry");
  for (int s : strides)
    if (s < 1) throw std::invalid_argument("ModelConfig: strides must be >= 1");
  if (mel_scales.empty())
    throw std::invalid_argument("ModelConfig: no mel scales");
}

ModelConfig paper_scale_config() {
  ModelConfig cfg;
  cfg.sample_rate = 16000;
  cfg.strides = {2, 4, 5, 8};
  cfg.stem_channels = 32;
  cfg.embed_dim = 1024;
  cfg.kernel = 7;
  cfg.decoder_dim = 1536;
  cfg.k_s = 8;
  cfg.k_n = 8;
  cfg.codebook_size = 1024;
  return cfg;
}

ModelConfig fast_config() {
  ModelConfig cfg;
  cfg.sample_rate = 4000;
  cfg.strides = {2, 4, 5};
  cfg.stem_channels = 8;
  cfg.embed_dim = 32;
  cfg.kernel = 7;
  cfg.decoder_dim = 48;
  cfg.k_s = 3;
  cfg.k_n = 3;
  cfg.codebook_size = 32;
  cfg.teacher_dim = 16;
  cfg.mel_scales = {128, 256, 512};
  cfg.mel_bands = 32;
  return cfg;
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.sample_rate = 320;
  cfg.strides = {2, 2};
  cfg.stem_channels = 4;
  cfg.embed_dim = 16;
  cfg.kernel = 3;
  cfg.decoder_dim = 16;
  cfg.k_s = 2;
  cfg.k_n = 2;
  cfg.codebook_size = 8;
  cfg.teacher_dim = 8;
  cfg.mel_scales = {16, 32};
  cfg.mel_bands = 8;
  return cfg;
}

Tensor Encoder::forward(const Tensor& x) const {
  Tensor h = block_activation(
      conv1d(x, stem.w, stem.b, stem.kernel, stem.stride, causal));
  for (size_t i = 0; i < block_pre.size(); ++i) {
    const ConvLayer& pre = block_pre[i];
    const ConvLayer& down = block_down[i];
    h = block_activation(conv1d(h, pre.w, pre.b, pre.kernel, pre.stride, causal));
    h = block_activation(
        conv1d(h, down.w, down.b, down.kernel, down.stride, causal));
  }
  for (size_t l = 0; l < fw.size(); ++l)
    h = causal ? lstm(h, fw[l]) : bilstm(h, fw[l], bw[l]);
  return conv1d(h, head.w, head.b, head.kernel, head.stride, causal);
}

Tensor Decoder::forward(const Tensor& z) const {
  Tensor h = block_activation(
      conv1d(z, stem.w, stem.b, stem.kernel, stem.stride, causal));
  for (size_t i = 0; i < block_up.size(); ++i) {
    const ConvLayer& up = block_up[i];
    const ConvLayer& post = block_post[i];
    h = block_activation(
        conv1d_transposed(h, up.w, up.b, up.kernel, up.stride, causal));
    h = block_activation(
        conv1d(h, post.w, post.b, post.kernel, post.stride, causal));
  }
  return conv1d(h, head.w, head.b, head.kernel, head.stride, causal);
}

DecodecModel::DecodecModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(Rng::mix(cfg_.seed, 0x0de1));

  const int m = static_cast<int>(cfg_.strides.size());
  encoder.causal = cfg_.causal;
  encoder.stem = make_conv(1, cfg_.stem_channels, cfg_.kernel, 1, rng);
  Eigen::Index ch = cfg_.stem_channels;
  for (int i = 0; i < m; ++i) {
    const int s = cfg_.strides[static_cast<size_t>(i)];
    encoder.block_pre.push_back(make_conv(ch, ch, cfg_.kernel, 1, rng));
    encoder.block_down.push_back(make_conv(ch, ch * 2, 2 * s, s, rng));
    ch *= 2;
  }
  for (int l = 0; l < 2; ++l) {
    encoder.fw.push_back(make_lstm(ch, ch, rng));
    encoder.bw.push_back(make_lstm(ch, ch, rng));
  }
  encoder.head = make_conv(ch, cfg_.embed_dim, cfg_.kernel, 1, rng);

  decoder.causal = cfg_.causal;
  decoder.stem = make_conv(cfg_.embed_dim, cfg_.decoder_dim, cfg_.kernel, 1, rng);
  Eigen::Index dch = cfg_.decoder_dim;
  for (int i = m - 1; i >= 0; --i) {
    const int s = cfg_.strides[static_cast<size_t>(i)];
    const Eigen::Index next = std::max<Eigen::Index>(dch / 2, 4);
    decoder.block_up.push_back(make_conv_transposed(dch, next, 2 * s, s, rng));
    decoder.block_post.push_back(make_conv(next, next, cfg_.kernel, 1, rng));
    dch = next;
  }
  decoder.head = make_conv(dch, 1, cfg_.kernel, 1, rng);

  sop = make_projection_pair(cfg_.embed_dim, rng);
  srvq = make_rvq_stack(cfg_.k_s, cfg_.codebook_size, cfg_.embed_dim, rng);
  nrvq = make_rvq_stack(cfg_.k_n, cfg_.codebook_size, cfg_.embed_dim, rng);
  sg_head = make_sg_head(cfg_.teacher_dim, cfg_.embed_dim, rng);
}

Eigen::VectorXd pad_to_hop(const Eigen::VectorXd& x, int hop) {
  const Eigen::Index rem = x.size() % hop;
  if (rem == 0) return x;
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(x.size() + hop - rem);
  padded.head(x.size()) = x;
  return padded;
}

EncodeResult DecodecModel::encode(const Waveform& x) const {
  if (x.sample_rate != cfg_.sample_rate)
    throw std::invalid_argument("encode: sample rate does not match model");
  if (x.length() < cfg_.hop())
    throw std::invalid_argument("encode: input shorter than one frame");

  EncodeResult res;
  res.original_samples = x.length();
  const Eigen::VectorXd padded = pad_to_hop(x.samples, cfg_.hop());
  Tensor input(Eigen::MatrixXd(padded));

  Tensor y = encoder.forward(input);
  auto [s, n] = project(y, sop);
  res.y = y.value();
  res.s = s.value();
  res.n = n.value();

  RvqResult qs = rvq_encode(s, srvq);
  RvqResult qn = rvq_encode(n, nrvq);
  res.zs = qs.z.value();
  res.zn = qn.z.value();

  auto [zc, zr] = split_tokens(qs.tokens);
  res.tokens.zc = zc;
  res.tokens.zr = zr;
  res.tokens.zb = qn.tokens;
  res.tokens.config_fingerprint = fingerprint();
  return res;
}

Waveform DecodecModel::decode(const Eigen::MatrixXd& zs,
                              const Eigen::MatrixXd& zn,
                              Eigen::Index target_samples) const {
  if (zs.rows() != zn.rows() || zs.cols() != zn.cols())
    throw std::invalid_argument("decode: branch shape mismatch");
  Tensor z(Eigen::MatrixXd(zs + zn));
  Tensor out = decoder.forward(z);
  Waveform w;
  w.sample_rate = cfg_.sample_rate;
  const Eigen::Index full = out.rows();
  const Eigen::Index keep =
      target_samples >= 0 ? std::min(target_samples, full) : full;
  w.samples = out.value().col(0).head(keep);
  return w;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> DecodecModel::detokenize(
    const TokenBundle& tb) const {
  if (tb.config_fingerprint != fingerprint())
    throw std::runtime_error(
        "detokenize: token fingerprint does not match this model");
  if (tb.zr.cols() != cfg_.k_s - 1 || tb.zb.cols() != cfg_.k_n)
    throw std::invalid_argument("detokenize: stage count mismatch");
  if (tb.zc.rows() != tb.zr.rows() || tb.zc.rows() != tb.zb.rows())
    throw std::invalid_argument("detokenize: frame count mismatch");
  Eigen::MatrixXd zs = rvq_lookup(merge_tokens(tb.zc, tb.zr), srvq);
  Eigen::MatrixXd zn = rvq_lookup(tb.zb, nrvq);
  return {std::move(zs), std::move(zn)};
}

TokenBundle DecodecModel::blank_bundle(Eigen::Index frames) const {
  Waveform zero;
  zero.sample_rate = cfg_.sample_rate;
  zero.samples = Eigen::VectorXd::Zero(frames * cfg_.hop());
  return encode(zero).tokens;
}

std::vector<Parameter> DecodecModel::parameters() {
  std::vector<Parameter> out;
  auto push = [&out](const std::string& name, const Tensor& t) {
    for (const auto& p : out)
      if (p.name == name)
        throw std::logic_error("duplicate parameter name: " + name);
    out.push_back({name, t});
  };
  auto push_conv = [&](const std::string& name, const ConvLayer& l) {
    push(name + ".w", l.w);
    push(name + ".b", l.b);
  };
  auto push_lstm = [&](const std::string& name, const LstmCell<double>& c) {
    push(name + ".wx", c.wx);
    push(name + ".wh", c.wh);
    push(name + ".b", c.b);
  };

  push_conv("enc.stem", encoder.stem);
  for (size_t i = 0; i < encoder.block_pre.size(); ++i) {
    push_conv("enc.block" + std::to_string(i) + ".pre", encoder.block_pre[i]);
    push_conv("enc.block" + std::to_string(i) + ".down", encoder.block_down[i]);
  }
  for (size_t l = 0; l < encoder.fw.size(); ++l) {
    push_lstm("enc.lstm" + std::to_string(l) + ".fw", encoder.fw[l]);
    if (!cfg_.causal)
      push_lstm("enc.lstm" + std::to_string(l) + ".bw", encoder.bw[l]);
  }
  push_conv("enc.head", encoder.head);

  push_conv("dec.stem", decoder.stem);
  for (size_t i = 0; i < decoder.block_up.size(); ++i) {
    push_conv("dec.block" + std::to_string(i) + ".up", decoder.block_up[i]);
    push_conv("dec.block" + std::to_string(i) + ".post", decoder.block_post[i]);
  }
  push_conv("dec.head", decoder.head);

  push("sop.p_s", sop.p_s);
  push("sop.p_n", sop.p_n);
  for (int k = 0; k < srvq.n_stages(); ++k)
    push("srvq.stage" + std::to_string(k), srvq.stages[static_cast<size_t>(k)].entries);
  for (int k = 0; k < nrvq.n_stages(); ++k)
    push("nrvq.stage" + std::to_string(k), nrvq.stages[static_cast<size_t>(k)].entries);
  push("sg.w", sg_head.w);
  return out;
}

std::string serialize_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "sample_rate=" << cfg.sample_rate << "\n";
  os << "strides=";
  for (size_t i = 0; i < cfg.strides.size(); ++i)
    os << (i ? "," : "") << cfg.strides[i];
  os << "\n";
  os << "stem_channels=" << cfg.stem_channels << "\n";
  os << "embed_dim=" << cfg.embed_dim << "\n";
  os << "kernel=" << cfg.kernel << "\n";
  os << "decoder_dim=" << cfg.decoder_dim << "\n";
  os << "k_s=" << cfg.k_s << "\n";
  os << "k_n=" << cfg.k_n << "\n";
  os << "codebook_size=" << cfg.codebook_size << "\n";
  os << "causal=" << (cfg.causal ? 1 : 0) << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "teacher_dim=" << cfg.teacher_dim << "\n";
  os << "mel_scales=";
  for (size_t i = 0; i < cfg.mel_scales.size(); ++i)
    os << (i ? "," : "") << cfg.mel_scales[i];
  os << "\n";
  os << "mel_bands=" << cfg.mel_bands << "\n";
  return os.str();
}

std::uint64_t DecodecModel::fingerprint() const {
  // FNV-1a over the serialized config and every parameter byte.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::string conf = serialize_config(cfg_);
  feed(conf.data(), conf.size());
  auto* self = const_cast<DecodecModel*>(this);
  for (const Parameter& p : self->parameters()) {
    const Eigen::MatrixXd& m = p.tensor.value();
    feed(p.name.data(), p.name.size());
    feed(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
  }
  return h;
}

}  // namespace decodec
