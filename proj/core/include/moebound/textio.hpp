#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "moebound/errors.hpp"

namespace moebound {

// Shortest representation that round-trips an IEEE double exactly.
std::string fmt_double(double v);

double parse_double(const std::string& token, const std::string& where);
long long parse_int(const std::string& token, const std::string& where);
std::uint64_t parse_u64(const std::string& token, const std::string& where);

std::vector<std::string> split(const std::string& line, char sep);
std::string trim(const std::string& s);

std::uint64_t fnv1a_64(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

// Line-oriented reader that tracks position for "path:line" diagnostics.
class LineReader {
 public:
  LineReader(const std::string& path);

  // False at end of file. Throws ParseError on stream failure.
  bool next(std::string& line);

  // Like next(), but end of file is itself a ParseError ("truncated").
  std::string expect_line();

  std::string where() const;  // "path:line"

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace moebound
