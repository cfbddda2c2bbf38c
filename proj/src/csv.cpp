#include "vitforge/csv.hpp"

#include <charconv>
#include <sstream>

#include "vitforge/errors.hpp"
#include "vitforge/rng.hpp"

namespace vitforge {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

std::string cell(double v) { return format_double(v); }
std::string cell(int v) { return std::to_string(v); }
std::string cell(int64_t v) { return std::to_string(v); }
std::string cell(uint64_t v) { return std::to_string(v); }
std::string cell(const std::string& s) { return s; }

static std::string join(const std::vector<std::string>& cells) {
  std::string line;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& preamble,
                     const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw ConfigError("cannot open for writing: " + path);
  for (const auto& p : preamble) out_ << "# " << p << "\n";
  out_ << join(header) << "\n";
  cols_ = header.size();
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != cols_) throw ConfigError("csv row width mismatch in " + path_);
  out_ << join(cells) << "\n";
}

void CsvWriter::flush() { out_.flush(); }

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

CsvContent read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  CsvContent c;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      size_t at = 1;
      if (at < line.size() && line[at] == ' ') ++at;
      c.preamble.push_back(line.substr(at));
      continue;
    }
    if (!have_header) {
      c.header = split_line(line);
      have_header = true;
    } else {
      c.rows.push_back(split_line(line));
    }
  }
  return c;
}

uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for digest: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return fnv1a64(std::string_view(bytes.data(), bytes.size()));
}

}  // namespace vitforge
