#include "signmotion/container.hpp"

#include "signmotion/errors.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace signmotion {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw FormatError("container: truncated file");
  return value;
}

}  // namespace

void ArrayContainer::add(const std::string& name, const Mat& value) {
  for (auto& [n, m] : arrays_) {
    if (n == name) {
      m = value;
      return;
    }
  }
  arrays_.emplace_back(name, value);
}

void ArrayContainer::add(const std::string& name, const Vec& value) {
  add(name, Mat(value));
}

void ArrayContainer::add_scalar(const std::string& name, Scalar value) {
  Mat m(1, 1);
  m(0, 0) = value;
  add(name, m);
}

bool ArrayContainer::has(const std::string& name) const {
  for (const auto& [n, m] : arrays_)
    if (n == name) return true;
  return false;
}

const Mat& ArrayContainer::at(const std::string& name) const {
  for (const auto& [n, m] : arrays_)
    if (n == name) return m;
  throw FormatError("container: missing array '" + name + "'");
}

Vec ArrayContainer::vector_at(const std::string& name) const {
  const Mat& m = at(name);
  if (m.cols() != 1 && m.rows() != 1)
    throw FormatError("container: array '" + name + "' is not a vector");
  if (m.cols() == 1) return m.col(0);
  return m.row(0).transpose();
}

Scalar ArrayContainer::scalar_at(const std::string& name) const {
  const Mat& m = at(name);
  if (m.size() != 1) throw FormatError("container: array '" + name + "' is not a scalar");
  return m(0, 0);
}

void ArrayContainer::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("container: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::uint64_t>(os, metadata.size());
  os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(arrays_.size()));
  for (const auto& [name, m] : arrays_) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) write_pod<double>(os, m(r, c));
  }
  if (!os) throw FormatError("container: write failed for '" + path.string() + "'");
}

ArrayContainer ArrayContainer::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("container: cannot open '" + path.string() + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("container: bad magic in '" + path.string() + "'");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw FormatError("container: unsupported version " + std::to_string(version));

  ArrayContainer out;
  const auto meta_len = read_pod<std::uint64_t>(is);
  out.metadata.resize(meta_len);
  is.read(out.metadata.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw FormatError("container: truncated metadata");

  const auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw FormatError("container: truncated array name");
    const auto rows = read_pod<std::uint64_t>(is);
    const auto cols = read_pod<std::uint64_t>(is);
    Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(is);
    out.arrays_.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace signmotion
