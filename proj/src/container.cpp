#include "dg/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "dg/error.hpp"

namespace dg {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const std::vector<char>& buf, std::size_t off) {
  const auto b = [&](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i]));
  };
  return b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
}

}  // namespace

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::vector<char> buf;
  buf.reserve(12 + 4 * t.rank() + 4 * t.size());
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d = 0; d < t.rank(); ++d) put_u32(buf, static_cast<std::uint32_t>(t.dim(d)));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float f = static_cast<float>(t[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("short write: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto need = [&](std::size_t bytes, const char* what) {
    if (buf.size() < bytes)
      throw FormatError(path.string() + ": truncated " + what + " (expected at least " +
                        std::to_string(bytes) + " bytes, file has " +
                        std::to_string(buf.size()) + ")");
  };

  need(8, "header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError(path.string() + ": bad magic at offset 0 (not a DGT1 container)");
  const std::uint32_t version = get_u32(buf, 4);
  if (version != kVersion)
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version) +
                      " at offset 4");
  need(12, "dimension count");
  const std::uint32_t ndim = get_u32(buf, 8);
  if (ndim == 0 || ndim > 8)
    throw FormatError(path.string() + ": implausible ndim " + std::to_string(ndim) +
                      " at offset 8");
  need(12 + 4 * static_cast<std::size_t>(ndim), "dimension list");
  std::vector<std::size_t> shape(ndim);
  std::size_t volume = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) {
    const std::uint32_t v = get_u32(buf, 12 + 4 * d);
    if (v == 0) throw FormatError(path.string() + ": zero dimension in header");
    shape[d] = v;
    volume *= v;
  }
  const std::size_t payload_off = 12 + 4 * static_cast<std::size_t>(ndim);
  const std::size_t expected = payload_off + 4 * volume;
  if (buf.size() != expected)
    throw FormatError(path.string() + ": payload length mismatch (expected " +
                      std::to_string(expected) + " bytes, file has " +
                      std::to_string(buf.size()) + ")");
  std::vector<double> values(volume);
  for (std::size_t i = 0; i < volume; ++i) {
    const std::uint32_t bits = get_u32(buf, payload_off + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    values[i] = static_cast<double>(f);
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace dg
