#pragma once

// Shared plumbing: error type, deterministic RNG with seed derivation,
// CRC-32, and little-endian binary IO helpers.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seer {

inline constexpr std::string_view kVersion = "0.1.0";

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All randomness in the project flows through this
// generator so that results are a pure function of the master seed,
// independent of platform library implementations.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent sub-stream seed from a master seed, a role tag and
// integer indices. Used to give every (subcarrier, link, tap, ...) its own
// stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = master ^ 0x51ed270b9d9f2a4bULL;
  for (char c : tag) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    std::uint64_t s = h;
    h = splitmix64(s);
  }
  return h;
}

template <typename... Ix>
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, Ix... indices) {
  std::uint64_t h = derive_seed(master, tag);
  for (std::uint64_t ix : {static_cast<std::uint64_t>(indices)...}) {
    h ^= ix + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    std::uint64_t s = h;
    h = splitmix64(s);
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }  // n << 2^64, bias negligible

  // Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// CRC-32 (IEEE 802.3, reflected), used to guard file sections.
// ---------------------------------------------------------------------------

namespace detail {
inline const std::uint32_t* crc32_table() {
  static const auto table = [] {
    static std::uint32_t t[256];
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}
}  // namespace detail

inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0) {
  const auto* p = static_cast<const unsigned char*>(data);
  const std::uint32_t* table = detail::crc32_table();
  std::uint32_t c = seed ^ 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

inline std::uint32_t crc32(std::string_view s) { return crc32(s.data(), s.size()); }

// ---------------------------------------------------------------------------
// Little-endian binary IO. File formats are documented byte-exactly, so the
// writers commit to little-endian regardless of host order (all supported
// hosts are little-endian; the asserts below keep that honest).
// ---------------------------------------------------------------------------

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot open file for writing: " + path);
  }

  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  void put_bytes(const void* data, std::size_t len) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  }

  // Writes a length-prefixed, CRC-guarded section of plain-old-data values.
  template <typename T>
  void put_section(const std::vector<T>& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const std::uint64_t bytes = v.size() * sizeof(T);
    put<std::uint64_t>(bytes);
    put_bytes(v.data(), bytes);
    put<std::uint32_t>(crc32(v.data(), bytes));
  }

  bool good() const { return out_.good(); }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error("cannot open file for reading: " + path);
  }

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw Error("truncated file: " + path_);
    return v;
  }

  void get_bytes(void* data, std::size_t len) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (!in_) throw Error("truncated file: " + path_);
  }

  template <typename T>
  std::vector<T> get_section() {
    const auto bytes = get<std::uint64_t>();
    if (bytes % sizeof(T) != 0) throw Error("malformed section size in " + path_);
    std::vector<T> v(bytes / sizeof(T));
    if (bytes > 0) get_bytes(v.data(), bytes);
    const auto stored = get<std::uint32_t>();
    if (stored != crc32(v.data(), bytes))
      throw Error("checksum mismatch in section of " + path_);
    return v;
  }

 private:
  std::ifstream in_;
  std::string path_;
};

// Convenience text-file helpers.
inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open file for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace seer
