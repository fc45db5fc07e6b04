#pragma once

// Minimal native-endian binary serialization used by the model files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "vocabsel/error.hpp"

namespace vocabsel::binio {

class Writer {
 public:
  Writer(const std::filesystem::path& path, std::string_view magic) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error(ErrorKind::kMissingFile, "cannot write " + path.string());
    out_.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_vector(const std::vector<T>& values) {
    put<std::uint64_t>(values.size());
    out_.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
  }

  void put_raw(const void* data, std::size_t bytes) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  }

  void close() {
    out_.close();
    if (!out_) throw Error(ErrorKind::kMissingFile, "failed writing " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  Reader(const std::filesystem::path& path, std::string_view magic) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorKind::kMissingFile, "cannot open " + path.string());
    std::string got(magic.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in_ || got != magic) {
      throw Error(ErrorKind::kMalformedFormat, path.string() + ": bad magic header, expected " + std::string(magic));
    }
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    check();
    return value;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  std::vector<T> get_vector(std::uint64_t max_elements = std::uint64_t{1} << 36) {
    auto n = get<std::uint64_t>();
    if (n > max_elements) throw Error(ErrorKind::kMalformedFormat, path_.string() + ": implausible array length");
    std::vector<T> values(n);
    in_.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(T)));
    check();
    return values;
  }

  void get_raw(void* data, std::size_t bytes) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    check();
  }

 private:
  void check() {
    if (!in_) throw Error(ErrorKind::kMalformedFormat, path_.string() + ": truncated file");
  }

  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace vocabsel::binio
