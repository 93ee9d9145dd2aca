#include "swarmdiff/common/binary_io.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "swarmdiff/common/hash.hpp"

namespace swarmdiff {

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace binio {

HeaderLine parse_header_line(std::span<const char> bytes) {
  std::size_t end = 0;
  while (end < bytes.size() && bytes[end] != '\n') ++end;
  if (end == bytes.size()) throw IoError("missing header line terminator (byte offset " + std::to_string(end) + ")");
  HeaderLine out;
  try {
    out.header = nlohmann::json::parse(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(end));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("corrupt header at byte offset " + std::to_string(e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
  }
  if (!out.header.is_object()) throw IoError("header at byte offset 0 is not a JSON object");
  out.payload_offset = end + 1;
  return out;
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

void write_text(const std::string& path, std::string_view text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace binio
}  // namespace swarmdiff
