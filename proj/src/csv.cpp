#include "spext/csv.hpp"

#include <charconv>
#include <filesystem>

#include "spext/error.hpp"

namespace spext::csv {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    auto field = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Reader::Reader(const std::string& path) : path_(path), in_(path) {
  if (!in_) fail_io("cannot open " + path);
  std::vector<std::string> fields;
  if (!next(fields)) fail_io(path + ": empty file (missing header)");
  header_ = std::move(fields);
}

std::size_t Reader::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  fail_validation(path_ + ": missing column '" + std::string(name) + "'");
}

bool Reader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    fields = split(line);
    if (!header_.empty() && fields.size() != header_.size())
      fail("expected " + std::to_string(header_.size()) + " fields, got " +
           std::to_string(fields.size()));
    return true;
  }
  return false;
}

void Reader::fail(const std::string& what) const {
  fail_validation(path_ + ":" + std::to_string(line_) + ": " + what);
}

double to_double(const Reader& r, const std::string& field) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) r.fail("not a number: '" + field + "'");
  return v;
}

long to_long(const Reader& r, const std::string& field) {
  long v = 0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) r.fail("not an integer: '" + field + "'");
  return v;
}

std::string format(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write " + path);
  return out;
}

}  // namespace spext::csv
