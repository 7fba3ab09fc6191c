#include "moebound/textio.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace moebound {

std::string fmt_double(double v) {
  // Shortest of %.15g / %.16g / %.17g that parses back bit-exact, so files
  // stay readable while round-tripping exactly.
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_double(const std::string& token, const std::string& where) {
  const char* s = token.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s, &end);
  // ERANGE with a finite |v| <= DBL_MIN is gradual underflow: strtod already
  // returned the correctly rounded subnormal, which round-trips exactly.
  bool overflow = errno == ERANGE && (v == HUGE_VAL || v == -HUGE_VAL);
  if (end == s || *end != '\0' || overflow) {
    throw ParseError(where + ": bad float '" + token + "'");
  }
  return v;
}

long long parse_int(const std::string& token, const std::string& where) {
  const char* s = token.c_str();
  char* end = nullptr;
  errno = 0;
  long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0' || errno == ERANGE) {
    throw ParseError(where + ": bad integer '" + token + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& token, const std::string& where) {
  const char* s = token.c_str();
  char* end = nullptr;
  errno = 0;
  unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0' || errno == ERANGE || token.find('-') != std::string::npos) {
    throw ParseError(where + ": bad unsigned integer '" + token + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::uint64_t fnv1a_64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LineReader::LineReader(const std::string& path) : path_(path), in_(path) {
  if (!in_) throw StorageError("cannot open " + path);
}

bool LineReader::next(std::string& line) {
  if (!std::getline(in_, line)) {
    if (in_.bad()) throw StorageError(path_ + ": read failure");
    return false;
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  line_no_ += 1;
  return true;
}

std::string LineReader::expect_line() {
  std::string line;
  if (!next(line)) throw ParseError(path_ + ":" + std::to_string(line_no_ + 1) + ": truncated file");
  return line;
}

std::string LineReader::where() const {
  return path_ + ":" + std::to_string(line_no_);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StorageError("cannot open " + path + " for writing");
  out << content;
  out.flush();
  if (!out) throw StorageError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw StorageError(path + ": read failure");
  return ss.str();
}

}  // namespace moebound
