#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and require a little-endian host");

/// Append-only little-endian byte sink.
class Writer {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto offset = bytes_.size();
    bytes_.resize(offset + sizeof(T));
    std::memcpy(bytes_.data() + offset, &value, sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_all(std::span<const T> values) {
    const auto offset = bytes_.size();
    bytes_.resize(offset + values.size_bytes());
    if (!values.empty()) std::memcpy(bytes_.data() + offset, values.data(), values.size_bytes());
  }

  void put_raw(std::string_view raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }

  const std::vector<char>& bytes() const { return bytes_; }
  std::vector<char> release() { return std::move(bytes_); }

 private:
  std::vector<char> bytes_;
};

/// Bounds-checked reader; errors name the byte offset where parsing failed.
class Reader {
 public:
  explicit Reader(std::span<const char> bytes, std::size_t base_offset = 0)
      : bytes_(bytes), base_(base_offset) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_all(std::span<T> out) {
    require(out.size_bytes());
    if (!out.empty()) std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::string get_raw(std::size_t n) {
    require(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw IoError("truncated input at byte offset " + std::to_string(base_ + pos_) + ": need " +
                    std::to_string(n) + " bytes, have " + std::to_string(bytes_.size() - pos_));
    }
  }

  std::span<const char> bytes_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

/// Files that start with one JSON header line followed by a binary payload.
struct HeaderLine {
  nlohmann::json header;
  std::size_t payload_offset;
};

/// Parses the first line as JSON. Throws IoError naming the byte offset of
/// the failure.
HeaderLine parse_header_line(std::span<const char> bytes);

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const char> bytes);
void write_text(const std::string& path, std::string_view text);

}  // namespace swarmdiff::binio
