#pragma once

// Text formats shared by the harness and the checkpoint writers.
//
//   FMAT   line 1 `FMAT <rows> <cols>`, then <rows> lines of <cols>
//          space-separated decimal floats (row-major).
//   LABL   line 1 `LABL <n>`, then n non-negative integer class ids, one per line.
//
// UTF-8, LF newlines. Readers report the 1-based line of the first problem.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "refu/matrix.hpp"
#include "refu/phase.hpp"

namespace refu {

enum class FloatStyle {
  /// Shortest text that parses back to the same double.
  shortest,
  /// Sign plus 17 significant digits in scientific notation with a
  /// three-digit exponent. Round-trips exactly and gives every finite value
  /// the same width, so the byte size of a block depends only on its shape.
  fixed_width,
};

std::string format_double(double v, FloatStyle style = FloatStyle::shortest);

/// Line-tracking reader over an input stream; lets several blocks share one file.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}
  /// Next line without its terminator; false at end of input.
  bool next(std::string& line);
  /// Next line that is not blank; false at end of input.
  bool next_nonblank(std::string& line);
  std::size_t line_number() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

void write_fmat(std::ostream& out, const Matrix& m, FloatStyle style = FloatStyle::shortest);
Matrix read_fmat(LineReader& reader);
Matrix parse_fmat(std::string_view text);

void write_labl(std::ostream& out, const std::vector<ClassId>& labels);
std::vector<ClassId> read_labl(LineReader& reader);
std::vector<ClassId> parse_labl(std::string_view text);

/// File wrappers. Missing files raise ValidationError naming the path; trailing
/// non-blank content after the block is a ParseError.
Matrix load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const Matrix& m);
std::vector<ClassId> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<ClassId>& labels);

/// Splits on runs of spaces/tabs.
std::vector<std::string_view> split_fields(std::string_view line);
/// Parse a whole token or throw ParseError tagged with `line`.
double parse_double(std::string_view token, std::size_t line);
std::size_t parse_count(std::string_view token, std::size_t line);

}  // namespace refu
