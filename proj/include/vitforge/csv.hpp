#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace vitforge {

// Fixed-format double rendering (general format, 12 significant digits) so CSV
// output is byte-identical across reruns and platforms.
std::string format_double(double v);

std::string cell(double v);
std::string cell(int v);
std::string cell(int64_t v);
std::string cell(uint64_t v);
std::string cell(const std::string& s);

// CSV file with '#'-prefixed preamble lines (config snapshot) above the header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& preamble,
            const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void flush();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  size_t cols_ = 0;
};

struct CsvContent {
  std::vector<std::string> preamble;  // '#' lines with the marker stripped
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Minimal reader for our own files: no quoting, comma-separated.
CsvContent read_csv(const std::string& path);

// FNV-1a over the file's raw bytes; used for output manifests.
uint64_t file_digest(const std::string& path);

}  // namespace vitforge
