#include "gpal/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "gpal/config_io.hpp"
#include "gpal/error.hpp"

namespace gpal::io {
namespace {

constexpr std::array<char, 8> kMagic = {'G', 'P', 'A', 'L', 'C', 'K', '0', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::string name) : buf_(buf), name_(std::move(name)) {}
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw TruncationError(name_ + ": checkpoint truncated");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t uint(int width) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(static_cast<std::size_t>(width)));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::uint64_t limit) {
    const auto v = u64();
    if (v > limit) throw FormatError(name_ + ": implausible size field " + std::to_string(v));
    return static_cast<std::size_t>(v);
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  if (const auto* gp = std::get_if<svgp::SvgpModel>(&ckpt.model)) {
    gp->validate();
    w.u32(static_cast<std::uint32_t>(ModelTag::Svgp));
    const auto cfg = dump_train_config(ckpt.train);
    w.u64(cfg.size());
    w.bytes(cfg.data(), cfg.size());
    const auto M = gp->num_inducing();
    const auto D = gp->dim();
    w.u64(static_cast<std::uint64_t>(gp->num_classes()));
    w.u64(static_cast<std::uint64_t>(M));
    w.u64(static_cast<std::uint64_t>(D));
    w.i32(gp->mc_samples);
    w.i32(gp->mc_samples_predict);
    w.f64(gp->jitter);
    w.f64(gp->kernel.log_lengthscale);
    w.f64(gp->kernel.log_variance);
    for (Eigen::Index i = 0; i < M; ++i)
      for (Eigen::Index j = 0; j < D; ++j) w.f64(gp->inducing(i, j));
    for (int c = 0; c < gp->num_classes(); ++c) {
      for (Eigen::Index i = 0; i < M; ++i) w.f64(gp->q_mu[c](i));
      for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) w.f64(gp->q_sqrt[c](i, j));
    }
  } else {
    const auto& sm = std::get<baseline::SoftmaxModel>(ckpt.model);
    sm.validate();
    w.u32(static_cast<std::uint32_t>(ModelTag::Softmax));
    const auto cfg = dump_train_config(ckpt.train);
    w.u64(cfg.size());
    w.bytes(cfg.data(), cfg.size());
    w.u64(static_cast<std::uint64_t>(sm.num_classes()));
    w.u64(static_cast<std::uint64_t>(sm.dim()));
    for (Eigen::Index c = 0; c < sm.weights.rows(); ++c)
      for (Eigen::Index j = 0; j < sm.weights.cols(); ++j) w.f64(sm.weights(c, j));
    for (Eigen::Index c = 0; c < sm.bias.size(); ++c) w.f64(sm.bias(c));
  }
  write_text(path, w.data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_text(path);
  const std::string name = path.string();
  Reader r(buf, name);
  if (std::memcmp(r.take(kMagic.size()), kMagic.data(), kMagic.size()) != 0)
    throw FormatError(name + ": missing GPALCK01 header");
  if (const auto v = r.u32(); v != kVersion)
    throw FormatError(name + ": unsupported checkpoint version " + std::to_string(v));
  const auto tag = r.u32();
  const auto cfg_len = r.count(buf.size());
  const std::string cfg_text(r.take(cfg_len), cfg_len);

  Checkpoint ck;
  try {
    ck.train = parse_train_config(cfg_text);
  } catch (const ValidationError& e) {
    throw FormatError(name + ": bad embedded config: " + e.what());
  }
  constexpr std::uint64_t kMaxDim = 1u << 24;
  if (tag == static_cast<std::uint32_t>(ModelTag::Svgp)) {
    svgp::SvgpModel m;
    const auto C = r.count(kMaxDim);
    const auto M = static_cast<Eigen::Index>(r.count(kMaxDim));
    const auto D = static_cast<Eigen::Index>(r.count(kMaxDim));
    m.mc_samples = r.i32();
    m.mc_samples_predict = r.i32();
    m.jitter = r.f64();
    m.kernel.log_lengthscale = r.f64();
    m.kernel.log_variance = r.f64();
    m.inducing.resize(M, D);
    for (Eigen::Index i = 0; i < M; ++i)
      for (Eigen::Index j = 0; j < D; ++j) m.inducing(i, j) = r.f64();
    for (std::size_t c = 0; c < C; ++c) {
      Eigen::VectorXd mu(M);
      for (Eigen::Index i = 0; i < M; ++i) mu(i) = r.f64();
      Eigen::MatrixXd L = Eigen::MatrixXd::Zero(M, M);
      for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) L(i, j) = r.f64();
      m.q_mu.push_back(std::move(mu));
      m.q_sqrt.push_back(std::move(L));
    }
    try {
      m.validate();
    } catch (const ValidationError& e) {
      throw FormatError(name + ": " + e.what());
    }
    ck.model = std::move(m);
  } else if (tag == static_cast<std::uint32_t>(ModelTag::Softmax)) {
    const auto C = static_cast<Eigen::Index>(r.count(kMaxDim));
    const auto D = static_cast<Eigen::Index>(r.count(kMaxDim));
    baseline::SoftmaxModel m{Eigen::MatrixXd(C, D), Eigen::VectorXd(C)};
    for (Eigen::Index c = 0; c < C; ++c)
      for (Eigen::Index j = 0; j < D; ++j) m.weights(c, j) = r.f64();
    for (Eigen::Index c = 0; c < C; ++c) m.bias(c) = r.f64();
    try {
      m.validate();
    } catch (const ValidationError& e) {
      throw FormatError(name + ": " + e.what());
    }
    ck.model = std::move(m);
  } else {
    throw FormatError(name + ": unknown model tag " + std::to_string(tag));
  }
  if (!r.done()) throw FormatError(name + ": trailing bytes after checkpoint payload");
  return ck;
}

}  // namespace gpal::io
