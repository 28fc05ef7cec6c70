#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace spext::csv {

// Minimal reader for the comma-separated files this project writes:
// no quoting, '#' starts a comment line, first non-comment line is a header.
class Reader {
 public:
  explicit Reader(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t column(std::string_view name) const;

  // Returns false at end of file.
  bool next(std::vector<std::string>& fields);
  std::size_t line() const { return line_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

std::vector<std::string> split(std::string_view line, char sep = ',');

double to_double(const Reader& r, const std::string& field);
long to_long(const Reader& r, const std::string& field);

// Shortest round-trip representation, locale independent.
std::string format(double v);

std::ofstream open_output(const std::string& path);

}  // namespace spext::csv
