#include "gdkd/logit_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gdkd {

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    bytes[b] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw Error(ErrorKind::Io, std::string("truncated logit dump while reading ") + what);
  }
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return static_cast<T>(v);
}

}  // namespace

void write_logit_dump(std::ostream& os, const Matrix& logits) {
  os.write("GDKD", 4);
  put_le<std::uint32_t>(os, kLogitDumpVersion);
  put_le<std::uint64_t>(os, logits.rows);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(logits.cols));
  for (double v : logits.data) {
    put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

Matrix read_logit_dump(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "GDKD", 4) != 0) {
    throw Error(ErrorKind::Io, "not a logit dump (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kLogitDumpVersion) {
    throw Error(ErrorKind::Io, "unsupported logit dump version " + std::to_string(version));
  }
  const auto n = get_le<std::uint64_t>(is, "sample count");
  const auto c = get_le<std::uint32_t>(is, "class count");
  if (c < 2) throw Error(ErrorKind::Io, "logit dump needs at least 2 classes");
  Matrix m(n, c);
  for (double& v : m.data) v = std::bit_cast<float>(get_le<std::uint32_t>(is, "values"));
  return m;
}

void write_labels(std::ostream& os, std::span<const Index> labels) {
  for (Index y : labels) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(y));
}

IndexSet read_labels(std::istream& is) {
  IndexSet out;
  std::array<unsigned char, 4> b{};
  while (is.read(reinterpret_cast<char*>(b.data()), 4)) {
    out.push_back(static_cast<Index>(b[0]) | static_cast<Index>(b[1]) << 8 |
                  static_cast<Index>(b[2]) << 16 | static_cast<Index>(b[3]) << 24);
  }
  if (is.gcount() != 0) throw Error(ErrorKind::Io, "label file length is not a multiple of 4");
  return out;
}

Matrix read_logit_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_logit_dump(in);
}

IndexSet read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_labels(in);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "rename to " + path.string() + " failed: " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace gdkd
