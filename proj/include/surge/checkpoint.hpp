#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "surge/models.hpp"

namespace surge {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Little-endian binary container:
//   magic "SRGE" | u32 version | u8 stripped | u8 method | u8 input_rank |
//   u64 input_dims[] | u32 block_count | blocks...
// Each block: u8 conv | u8 binarized | u8 relu_after | u8 flatten_after |
//   u8 rule_kind | f64 clip_bound | weights(rank,dims,data) | f64 alpha_w |
//   f64 alpha_x | u8 has_aux [ aux weights | f64 lambda | f64 eta |
//   f64 epsilon | u8 adaptive | u8 scope ]
inline constexpr char kCheckpointMagic[4] = {'S', 'R', 'G', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

// All fields are written byte-by-byte in little-endian order.
template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_le(out, bits);
}

template <typename T>
T read_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw IoError("checkpoint: unexpected end of file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_le<std::uint64_t>(in);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
  for (std::size_t d : t.shape) write_le<std::uint64_t>(out, d);
  for (double v : t.data) write_f64(out, v);
}

inline Tensor read_tensor(std::istream& in) {
  const std::size_t rank = read_le<std::uint8_t>(in);
  std::vector<std::size_t> shape(rank);
  for (std::size_t& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) v = read_f64(in);
  return t;
}

}  // namespace detail

inline void export_checkpoint(const Model& model, const std::string& path, bool strip = false) {
  const Model* m = &model;
  Model stripped;
  if (strip) {
    stripped = strip_auxiliary(model);
    m = &stripped;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write '" + path + "'");
  out.write(kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint8_t>(out, strip ? 1 : 0);
  detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(m->method));
  detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(m->input_shape.size()));
  for (std::size_t d : m->input_shape) detail::write_le<std::uint64_t>(out, d);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->blocks.size()));
  for (const Block& b : m->blocks) {
    detail::write_le<std::uint8_t>(out, b.conv ? 1 : 0);
    detail::write_le<std::uint8_t>(out, b.binarized ? 1 : 0);
    detail::write_le<std::uint8_t>(out, b.relu_after ? 1 : 0);
    detail::write_le<std::uint8_t>(out, b.flatten_after ? 1 : 0);
    const SurrogateRule rule = b.conv ? b.cnv.rule : b.lin.rule;
    detail::write_le<std::uint8_t>(out, rule.kind == SurrogateKind::BiReal ? 1 : 0);
    detail::write_f64(out, rule.clip_bound);
    detail::write_tensor(out, b.weights());
    detail::write_f64(out, b.conv ? b.cnv.alpha_w[0] : b.lin.alpha_w[0]);
    detail::write_f64(out, b.conv ? b.cnv.alpha_x[0] : b.lin.alpha_x[0]);
    detail::write_le<std::uint8_t>(out, b.aux ? 1 : 0);
    if (b.aux) {
      detail::write_tensor(out, b.aux->w_aux);
      detail::write_f64(out, b.aux->ags.lambda);
      detail::write_f64(out, b.aux->ags.eta);
      detail::write_f64(out, b.aux->ags.epsilon);
      detail::write_le<std::uint8_t>(out, b.aux->ags.adaptive ? 1 : 0);
      detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(b.aux->scope));
    }
  }
  if (!out) throw IoError("checkpoint: write failure on '" + path + "'");
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("checkpoint: '" + path + "' is not a SRGE checkpoint");
  const std::uint32_t version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + " in '" + path +
                  "' (expected " + std::to_string(kCheckpointVersion) + ")");
  detail::read_le<std::uint8_t>(in);  // strip flag: informational
  Model m;
  m.method = static_cast<Method>(detail::read_le<std::uint8_t>(in));
  const std::size_t rank = detail::read_le<std::uint8_t>(in);
  m.input_shape.resize(rank);
  for (std::size_t& d : m.input_shape) d = static_cast<std::size_t>(detail::read_le<std::uint64_t>(in));
  const std::uint32_t nblocks = detail::read_le<std::uint32_t>(in);
  m.blocks.resize(nblocks);
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    Block& b = m.blocks[i];
    b.index = static_cast<int>(i);
    b.conv = detail::read_le<std::uint8_t>(in) != 0;
    b.binarized = detail::read_le<std::uint8_t>(in) != 0;
    b.relu_after = detail::read_le<std::uint8_t>(in) != 0;
    b.flatten_after = detail::read_le<std::uint8_t>(in) != 0;
    SurrogateRule rule;
    rule.kind = detail::read_le<std::uint8_t>(in) ? SurrogateKind::BiReal : SurrogateKind::STE;
    rule.clip_bound = detail::read_f64(in);
    Tensor w = detail::read_tensor(in);
    const double aw = detail::read_f64(in);
    const double ax = detail::read_f64(in);
    if (b.conv) {
      b.cnv.weight = std::move(w);
      b.cnv.rule = rule;
      b.cnv.alpha_w = Tensor::scalar(aw);
      b.cnv.alpha_x = Tensor::scalar(ax);
    } else {
      b.lin.weight = std::move(w);
      b.lin.rule = rule;
      b.lin.alpha_w = Tensor::scalar(aw);
      b.lin.alpha_x = Tensor::scalar(ax);
    }
    if (detail::read_le<std::uint8_t>(in) != 0) {
      DualPath aux;
      aux.w_aux = detail::read_tensor(in);
      aux.ags.lambda = detail::read_f64(in);
      aux.ags.eta = detail::read_f64(in);
      aux.ags.epsilon = detail::read_f64(in);
      aux.ags.adaptive = detail::read_le<std::uint8_t>(in) != 0;
      aux.scope = static_cast<GradScope>(detail::read_le<std::uint8_t>(in));
      aux.clip_bound = rule.clip_bound;
      b.aux = std::move(aux);
    }
  }
  return m;
}

}  // namespace surge
