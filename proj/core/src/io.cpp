#include "refu/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "refu/errors.hpp"

namespace refu {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  return out;
}

void require_eof(LineReader& reader) {
  std::string line;
  if (reader.next_nonblank(line)) {
    throw ParseError("unexpected content after block", reader.line_number());
  }
}

// Header of the form `<TAG> <count>...`; returns the numeric fields.
std::vector<std::size_t> read_header(LineReader& reader, std::string_view tag,
                                     std::size_t expected_counts) {
  std::string line;
  if (!reader.next_nonblank(line)) {
    throw ParseError("missing " + std::string(tag) + " header", reader.line_number() + 1);
  }
  const auto fields = split_fields(line);
  if (fields.empty() || fields[0] != tag || fields.size() != expected_counts + 1) {
    throw ParseError("malformed header, expected '" + std::string(tag) + "' with " +
                         std::to_string(expected_counts) + " count(s)",
                     reader.line_number());
  }
  std::vector<std::size_t> counts;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    counts.push_back(parse_count(fields[i], reader.line_number()));
  }
  return counts;
}

}  // namespace

std::string format_double(double v, FloatStyle style) {
  if (!std::isfinite(v)) throw ValidationError("format_double: non-finite value");
  if (style == FloatStyle::fixed_width) {
    // Mantissa from printf, exponent padded to three digits so every value
    // has the same width.
    char buf[40];
    std::snprintf(buf, sizeof buf, "%+.16e", v);
    std::string text(buf);
    const auto e = text.find('e');
    const std::string digits = text.substr(e + 2);
    return text.substr(0, e + 2) + std::string(3 - digits.size(), '0') + digits;
  }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool LineReader::next(std::string& line) {
  if (!std::getline(in_, line)) return false;
  ++line_;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

bool LineReader::next_nonblank(std::string& line) {
  while (next(line)) {
    if (line.find_first_not_of(" \t") != std::string::npos) return true;
  }
  return false;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto start = line.find_first_not_of(" \t", pos);
    if (start == std::string_view::npos) break;
    auto end = line.find_first_of(" \t", start);
    if (end == std::string_view::npos) end = line.size();
    out.push_back(line.substr(start, end - start));
    pos = end;
  }
  return out;
}

double parse_double(std::string_view token, std::size_t line) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token.front() == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ParseError("invalid number '" + std::string(token) + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(token) + "'", line);
  return v;
}

std::size_t parse_count(std::string_view token, std::size_t line) {
  std::size_t v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ParseError("invalid count '" + std::string(token) + "'", line);
  }
  return v;
}

void write_fmat(std::ostream& out, const Matrix& m, FloatStyle style) {
  out << "FMAT " << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) out << ' ';
      out << format_double(row[j], style);
    }
    out << '\n';
  }
}

Matrix read_fmat(LineReader& reader) {
  const auto counts = read_header(reader, "FMAT", 2);
  const std::size_t rows = counts[0];
  const std::size_t cols = counts[1];
  std::vector<double> data;
  data.reserve(rows * cols);
  std::string line;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!reader.next(line)) {
      throw ParseError("row count mismatch: expected " + std::to_string(rows) + " rows, found " +
                           std::to_string(i),
                       reader.line_number() + 1);
    }
    const auto fields = split_fields(line);
    if (fields.size() != cols) {
      throw ParseError("column count mismatch: expected " + std::to_string(cols) + " values, found " +
                           std::to_string(fields.size()),
                       reader.line_number());
    }
    for (auto f : fields) data.push_back(parse_double(f, reader.line_number()));
  }
  return Matrix(rows, cols, std::move(data));
}

Matrix parse_fmat(std::string_view text) {
  std::istringstream in{std::string(text)};
  LineReader reader(in);
  Matrix m = read_fmat(reader);
  require_eof(reader);
  return m;
}

void write_labl(std::ostream& out, const std::vector<ClassId>& labels) {
  out << "LABL " << labels.size() << '\n';
  for (ClassId c : labels) out << c << '\n';
}

std::vector<ClassId> read_labl(LineReader& reader) {
  const std::size_t n = read_header(reader, "LABL", 1)[0];
  std::vector<ClassId> labels;
  labels.reserve(n);
  std::string line;
  for (std::size_t i = 0; i < n; ++i) {
    if (!reader.next(line)) {
      throw ParseError("label count mismatch: expected " + std::to_string(n) + " labels, found " +
                           std::to_string(i),
                       reader.line_number() + 1);
    }
    const auto fields = split_fields(line);
    if (fields.size() != 1) throw ParseError("expected one class id per line", reader.line_number());
    labels.push_back(parse_count(fields[0], reader.line_number()));
  }
  return labels;
}

std::vector<ClassId> parse_labl(std::string_view text) {
  std::istringstream in{std::string(text)};
  LineReader reader(in);
  auto labels = read_labl(reader);
  require_eof(reader);
  return labels;
}

Matrix load_features(const std::filesystem::path& path) {
  auto in = open_input(path);
  LineReader reader(in);
  try {
    Matrix m = read_fmat(reader);
    require_eof(reader);
    return m;
  } catch (const ParseError& e) {
    throw e.in_file(path.string());
  }
}

void save_features(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_output(path);
  write_fmat(out, m);
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

std::vector<ClassId> load_labels(const std::filesystem::path& path) {
  auto in = open_input(path);
  LineReader reader(in);
  try {
    auto labels = read_labl(reader);
    require_eof(reader);
    return labels;
  } catch (const ParseError& e) {
    throw e.in_file(path.string());
  }
}

void save_labels(const std::filesystem::path& path, const std::vector<ClassId>& labels) {
  auto out = open_output(path);
  write_labl(out, labels);
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

}  // namespace refu
