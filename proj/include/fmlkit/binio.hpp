#pragma once

// Little helpers for the self-describing binary files. Values are written
// in host byte order (little-endian on every supported target).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "fmlkit/common.hpp"

namespace fmlkit::binio {

class Writer {
public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot open for writing", path);
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  void put_bytes(const void* data, std::size_t size) { out_.write(static_cast<const char*>(data), size); }
  void put_doubles(const std::vector<double>& v) { put_bytes(v.data(), v.size() * sizeof(double)); }

  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  void finish() {
    out_.flush();
    if (!out_) throw Error("write failed", path_);
  }

private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open for reading", path);
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  T get(const char* field) {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) throw Error("file truncated", field);
    return v;
  }

  void get_bytes(void* data, std::size_t size, const char* field) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (in_.gcount() != static_cast<std::streamsize>(size)) throw Error("file truncated", field);
  }

  std::vector<double> get_doubles(std::size_t count, const char* field) {
    std::vector<double> v(count);
    get_bytes(v.data(), count * sizeof(double), field);
    return v;
  }

  std::string get_string(const char* field) {
    const auto size = get<std::uint32_t>(field);
    if (size > (1u << 20)) throw Error("implausible string length", field);
    std::string s(size, '\0');
    get_bytes(s.data(), size, field);
    return s;
  }

  void expect_magic(const char (&magic)[9]) {
    char buf[8];
    get_bytes(buf, 8, "magic");
    if (std::memcmp(buf, magic, 8) != 0) throw Error("bad magic, not a " + std::string(magic, 8) + " file", "magic");
  }

  /// Bytes left after the current position.
  std::uint64_t remaining() {
    const auto here = in_.tellg();
    in_.seekg(0, std::ios::end);
    const auto end = in_.tellg();
    in_.seekg(here);
    return static_cast<std::uint64_t>(end - here);
  }

  void expect_end(const char* field) {
    if (remaining() != 0) throw Error("trailing bytes after payload", field);
  }

  const std::string& path() const { return path_; }

private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace fmlkit::binio
