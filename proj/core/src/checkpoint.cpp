// ACDT checkpoints (little-endian):
//   "ACDT" | u32 version=1 | u32 d | u32 L | u32 K |
//   until EOF: u32 name_len | name | u32 rows | u32 cols | rows*cols f64, row-major
#include "drnwm/ac_dit.hpp"
#include "drnwm/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace drnwm::acdit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'C', 'D', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::ifstream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError(std::string("checkpoint truncated reading ") + what);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const AcDitModel& m, int tokens,
                     int frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(m.config.d));
  put_u32(out, static_cast<std::uint32_t>(tokens));
  put_u32(out, static_cast<std::uint32_t>(frames));
  AcDitModel copy = m;
  for (const auto& s : parameter_slots(copy)) {
    put_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put_u32(out, static_cast<std::uint32_t>(s.rows));
    put_u32(out, static_cast<std::uint32_t>(s.cols));
    // Slots are column-major; the file is row-major.
    for (Eigen::Index r = 0; r < s.rows; ++r) {
      for (Eigen::Index c = 0; c < s.cols; ++c) {
        const double v = s.data[c * s.rows + r];
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
}

std::pair<int, int> load_checkpoint(const std::filesystem::path& path, AcDitModel& m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  if (get_u32(in, "version") != kVersion) throw FormatError("checkpoint: unsupported version");
  const auto d = get_u32(in, "d");
  const auto L = get_u32(in, "L");
  const auto K = get_u32(in, "K");
  if (static_cast<int>(d) != m.config.d) {
    throw FormatError("checkpoint: d=" + std::to_string(d) + " does not match model d=" +
                      std::to_string(m.config.d));
  }

  std::map<std::string, ParamSlot> slots;
  for (auto& s : parameter_slots(m)) slots.emplace(s.name, s);
  std::map<std::string, bool> seen;

  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get_u32(in, "name length");
    if (len > 256) throw FormatError("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("checkpoint truncated reading name");
    const auto rows = get_u32(in, "rows");
    const auto cols = get_u32(in, "cols");
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("checkpoint: unknown array '" + name + "'");
    const ParamSlot& s = it->second;
    if (rows != s.rows || cols != s.cols) {
      throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    }
    for (Eigen::Index r = 0; r < s.rows; ++r) {
      for (Eigen::Index c = 0; c < s.cols; ++c) {
        double v;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
          throw FormatError("checkpoint truncated in '" + name + "'");
        }
        s.data[c * s.rows + r] = v;
      }
    }
    seen[name] = true;
  }
  for (const auto& [name, s] : slots) {
    if (!seen.count(name)) throw FormatError("checkpoint: missing array '" + name + "'");
  }
  return {static_cast<int>(L), static_cast<int>(K)};
}

}  // namespace drnwm::acdit
