#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mlq {

std::string sha256_hex(std::string_view data);
std::uint64_t sha256_u64(std::string_view data);
std::string base64_encode(const void* data, std::size_t bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

/// RFC 4180 field quoting.
std::string csv_escape(const std::string& field);
/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

// Minimal CSV writer: LF line endings, RFC 4180 quoting.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& row);
  void add_row(const std::vector<double>& row);
  std::string str() const;
  std::size_t rows() const { return rows_; }

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string body_;
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace mlq
