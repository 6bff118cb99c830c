#include "contcal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "contcal/errors.hpp"
#include "contcal/idx.hpp"

namespace contcal {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void matrix(const Matrix& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  Matrix matrix(std::size_t rows, std::size_t cols) {
    const std::size_t at = pos_;
    const std::uint32_t r = u32();
    const std::uint32_t c = u32();
    if (r != rows || c != cols) {
      throw ParseError("checkpoint: parameter shape (" + std::to_string(r) + "x" +
                           std::to_string(c) + "), expected " + Matrix(rows, cols).shape(),
                       at);
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) v = f64();
    return m;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint: truncated", pos_);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CalibratedModel& cm) {
  Writer w;
  for (std::uint8_t b : kMagic) w.u8(b);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(cm.base.in_dim));
  w.u32(static_cast<std::uint32_t>(cm.base.hidden_dim));
  w.u32(static_cast<std::uint32_t>(cm.base.n_classes));
  const HeadKind kind = cm.head.kind();
  w.u8(static_cast<std::uint8_t>(kind));
  w.u8(kind == HeadKind::Affine && cm.head.as_affine().diagonal_only ? 1 : 0);
  w.u8(0);
  w.u8(0);
  std::vector<const Matrix*> mats = {&cm.base.w1.value, &cm.base.b1.value, &cm.base.w2.value,
                                     &cm.base.b2.value};
  if (kind == HeadKind::Temperature) mats.push_back(&cm.head.as_temperature().t.value);
  if (kind == HeadKind::Affine) {
    mats.push_back(&cm.head.as_affine().w.value);
    mats.push_back(&cm.head.as_affine().b.value);
  }
  w.u32(static_cast<std::uint32_t>(mats.size()));
  for (const Matrix* m : mats) w.matrix(*m);
  return w.take();
}

CalibratedModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (std::size_t i = 0; i < 4; ++i) {
    if (r.u8() != kMagic[i]) throw ParseError("checkpoint: bad magic", i);
  }
  if (const std::uint32_t v = r.u32(); v != kVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(v), 4);
  }
  const std::size_t in_dim = r.u32();
  const std::size_t hidden = r.u32();
  const std::size_t classes = r.u32();
  const std::uint8_t tag = r.u8();
  const bool diagonal = r.u8() != 0;
  r.u8();
  r.u8();
  if (tag > 2) throw ParseError("checkpoint: unknown head tag " + std::to_string(tag), 20);
  const std::uint32_t count = r.u32();
  const std::uint32_t expected = tag == 0 ? 4 : tag == 1 ? 5 : 6;
  if (count != expected) {
    throw ParseError("checkpoint: " + std::to_string(count) + " parameters, expected " +
                         std::to_string(expected),
                     24);
  }
  CalibratedModel cm;
  cm.base.in_dim = in_dim;
  cm.base.hidden_dim = hidden;
  cm.base.n_classes = classes;
  cm.base.w1 = Param(r.matrix(in_dim, hidden));
  cm.base.b1 = Param(r.matrix(1, hidden));
  cm.base.w2 = Param(r.matrix(hidden, classes));
  cm.base.b2 = Param(r.matrix(1, classes));
  if (tag == 1) {
    const std::size_t at = r.pos();
    const Matrix t = r.matrix(1, 1);
    if (!(t(0, 0) >= kMinTemperature)) throw ParseError("checkpoint: temperature below minimum", at);
    cm.head = CalibrationHead::temperature(t(0, 0));
  } else if (tag == 2) {
    cm.head = CalibrationHead::affine(classes, diagonal);
    cm.head.as_affine().w.value = r.matrix(classes, classes);
    cm.head.as_affine().b.value = r.matrix(1, classes);
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes", r.pos());
  return cm;
}

void save_checkpoint(const std::filesystem::path& path, const CalibratedModel& cm) {
  const auto bytes = encode_checkpoint(cm);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CalibratedModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(idx::read_file(path));
}

}  // namespace contcal
