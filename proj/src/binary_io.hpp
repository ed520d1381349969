#pragma once

// Little-endian primitives shared by the epoch and checkpoint containers.

#include "neurodecode/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace neurodecode::detail {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw FormatError(FormatErrorKind::io, "cannot open '" + path.string() + "' for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  template <typename T>
  void values(const std::vector<T>& v) { bytes(v.data(), v.size() * sizeof(T)); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void finish() {
    out_.flush();
    if (!out_) throw FormatError(FormatErrorKind::io, "failed writing '" + path_.string() + "'");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError(FormatErrorKind::io, "cannot open '" + path.string() + "'");
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0);
  }

  std::uint64_t remaining() const { return size_ - pos_; }

  void bytes(void* data, std::size_t n, const char* what) {
    if (n > remaining()) {
      throw FormatError(FormatErrorKind::truncated_payload,
                        "'" + path_.string() + "' ends while reading " + what);
    }
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    bytes(&v, sizeof v, what);
    return v;
  }
  template <typename T>
  std::vector<T> values(std::size_t n, const char* what) {
    if (n > remaining() / sizeof(T)) {
      throw FormatError(FormatErrorKind::truncated_payload,
                        "'" + path_.string() + "' ends while reading " + what);
    }
    std::vector<T> v(n);
    bytes(v.data(), n * sizeof(T), what);
    return v;
  }
  std::string string(const char* what) {
    const std::uint32_t n = u32(what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t pos_ = 0;
};

}  // namespace neurodecode::detail
