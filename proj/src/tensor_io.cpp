#include "pmp/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace pmp {
PMP_PRECISION_BEGIN

namespace {

constexpr std::array<char, 4> kMagic{'P', 'M', 'T', '1'};
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF),
                              static_cast<char>((v >> 24) & 0xFF)};
  os.write(b.data(), 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

void write_pmt1(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (Real v : t.values()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!os) throw Error("PMT1: write failed");
}

Tensor read_pmt1(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kMagic) throw ParseError("PMT1: bad magic");
  std::uint32_t rank = 0;
  if (!get_u32(is, rank)) throw ParseError("PMT1: truncated header");
  if (rank > kMaxRank) throw ParseError("PMT1: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint32_t v = 0;
    if (!get_u32(is, v)) throw ParseError("PMT1: truncated header");
    if (v == 0) throw ParseError("PMT1: zero dimension");
    d = v;
  }
  const std::size_t n = shape_numel(shape);
  std::vector<Real> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    if (!get_u32(is, bits)) throw ParseError("PMT1: truncated payload");
    values[i] = static_cast<Real>(std::bit_cast<float>(bits));
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_pmt1(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  return read_pmt1(is);
}

PMP_PRECISION_END
}  // namespace pmp
