#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "evitransfer/error.hpp"

namespace evt::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are defined as little-endian");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    require(out_.good(), ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  }

  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void put_bytes(std::span<const char> bytes) {
    out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void put_doubles(std::span<const double> values) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
  }

  void finish() {
    out_.flush();
    require(out_.good(), ErrorKind::Io, "write failed for '" + path_.string() + "'");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    require(in_.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
  }

  template <typename T>
  T get(const char* what) {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    require(in_.gcount() == sizeof(T), ErrorKind::Data,
            "truncated file '" + path_.string() + "' while reading " + what);
    return value;
  }

  void get_bytes(std::span<char> out, const char* what) {
    in_.read(out.data(), static_cast<std::streamsize>(out.size()));
    require(static_cast<std::size_t>(in_.gcount()) == out.size(), ErrorKind::Data,
            "truncated file '" + path_.string() + "' while reading " + what);
  }

  std::string get_string(const char* what, std::size_t max_len = 1 << 20) {
    const auto len = get<std::uint64_t>(what);
    require(len <= max_len, ErrorKind::Data, std::string("implausible length for ") + what);
    std::string s(len, '\0');
    get_bytes(s, what);
    return s;
  }

  void get_doubles(std::span<double> out, const char* what) {
    get_bytes({reinterpret_cast<char*>(out.data()), out.size() * sizeof(double)}, what);
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace evt::detail
