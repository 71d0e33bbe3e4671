#include "sdre/binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sdre::io {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'D', 'R', 'E', 'L', 'A', 'B', '1'};

template <typename T>
void put_le(std::ostream& os, T value) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(const char* p) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

void write_container(const std::string& path, const nlohmann::json& header,
                     std::span<const double> payload) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  const std::string text = header.dump();
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size_bytes()));
  } else {
    for (double v : payload) put_le(os, v);
  }
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

Container read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw std::runtime_error("'" + path + "' is not an sdrelab container");
  }
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (16 + header_len > bytes.size()) throw std::runtime_error("'" + path + "': truncated header");
  Container c;
  c.header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  const std::size_t rest = bytes.size() - 16 - header_len;
  if (rest % sizeof(double) != 0) {
    throw std::runtime_error("'" + path + "': payload is not a whole number of float64 values");
  }
  c.payload.resize(rest / sizeof(double));
  const char* p = bytes.data() + 16 + header_len;
  for (std::size_t i = 0; i < c.payload.size(); ++i) c.payload[i] = get_le<double>(p + 8 * i);
  return c;
}

}  // namespace sdre::io
