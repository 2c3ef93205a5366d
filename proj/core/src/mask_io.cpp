// DRNM mask files (little-endian):
//   "DRNM" | u32 version=1 | u32 L | u32 K |
//   per frame, past then future mask:
//     row_constrained bitmap, ceil(L/8) bytes, bit r%8 of byte r/8
//     per constrained row, ascending: u16 count | count x u16 sorted columns
#include "drnwm/error.hpp"
#include "drnwm/mask_builder.hpp"

#include <array>
#include <fstream>
#include <iterator>

namespace drnwm::masks {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'D', 'R', 'N', 'M'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint16_t u16() {
    need(2, "u16");
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n, "bitmap");
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw FormatError(std::string("mask file truncated while reading ") + what);
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void encode_mask(Writer& w, const AttentionMask& m) {
  const int L = m.tokens();
  std::vector<std::uint8_t> bitmap(static_cast<std::size_t>((L + 7) / 8), 0);
  for (int r = 0; r < L; ++r) {
    if (m.row_constrained(r)) bitmap[static_cast<std::size_t>(r / 8)] |= std::uint8_t(1u << (r % 8));
  }
  w.bytes(bitmap);
  for (int r = 0; r < L; ++r) {
    if (!m.row_constrained(r)) continue;
    const auto cols = m.allowed_columns(r);
    w.u16(static_cast<std::uint16_t>(cols.size()));
    for (int c : cols) w.u16(static_cast<std::uint16_t>(c));
  }
}

AttentionMask decode_mask(Reader& rd, int L) {
  const auto bitmap = rd.bytes(static_cast<std::size_t>((L + 7) / 8));
  for (int r = L; r < ((L + 7) / 8) * 8; ++r) {
    if (bitmap[static_cast<std::size_t>(r / 8)] & (1u << (r % 8))) {
      throw FormatError("mask file: padding bits set in row bitmap");
    }
  }
  AttentionMask m(L);
  std::vector<int> cols;
  for (int r = 0; r < L; ++r) {
    if (!(bitmap[static_cast<std::size_t>(r / 8)] & (1u << (r % 8)))) continue;
    const std::uint16_t count = rd.u16();
    if (count == 0 || count > L) throw FormatError("mask file: invalid column count");
    cols.clear();
    for (std::uint16_t k = 0; k < count; ++k) {
      const int c = rd.u16();
      if (c >= L) throw FormatError("mask file: column index exceeds L");
      if (!cols.empty() && c <= cols.back()) throw FormatError("mask file: columns not ascending");
      cols.push_back(c);
    }
    m.set_row(r, cols);
  }
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_mask_sequence(const MaskSequence& seq) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  const int L = seq.masks.empty() ? 0 : seq.masks.front().past.tokens();
  if (L > 0xffff) throw InvalidArgument("mask file: L exceeds u16 column range");
  for (const auto& p : seq.masks) {
    if (p.past.tokens() != L || p.fut.tokens() != L) {
      throw InvalidArgument("mask file: masks in a sequence must share L");
    }
  }
  w.u32(static_cast<std::uint32_t>(L));
  w.u32(static_cast<std::uint32_t>(seq.masks.size()));
  for (const auto& p : seq.masks) {
    encode_mask(w, p.past);
    encode_mask(w, p.fut);
  }
  return w.take();
}

MaskSequence decode_mask_sequence(std::span<const std::uint8_t> bytes) {
  Reader rd(bytes);
  const auto magic = rd.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw FormatError("mask file: bad magic");
  }
  if (const auto v = rd.u32(); v != kVersion) {
    throw FormatError("mask file: unsupported version " + std::to_string(v));
  }
  const std::uint32_t L = rd.u32();
  const std::uint32_t K = rd.u32();
  if (K > 0 && (L == 0 || L > 0xffff)) throw FormatError("mask file: invalid L in header");
  MaskSequence seq;
  for (std::uint32_t k = 0; k < K; ++k) {
    MaskPair p;
    p.past = decode_mask(rd, static_cast<int>(L));
    p.fut = decode_mask(rd, static_cast<int>(L));
    seq.gated = seq.gated || !p.past.is_all_true() || !p.fut.is_all_true();
    seq.masks.push_back(std::move(p));
  }
  if (!rd.done()) {
    throw FormatError("mask file: " + std::to_string(rd.remaining()) +
                      " trailing bytes; header L/K disagree with payload");
  }
  return seq;
}

void write_mask_file(const std::filesystem::path& path, const MaskSequence& seq) {
  const auto bytes = encode_mask_sequence(seq);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write mask file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

MaskSequence read_mask_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open mask file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_mask_sequence(bytes);
}

}  // namespace drnwm::masks
