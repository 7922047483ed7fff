#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small CSV helpers shared by the readers and report writers.
namespace expomatch::csv {

// Splits one record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_line(std::string_view line);

// Reads the next non-empty line, stripping a trailing '\r'.
bool next_line(std::istream& in, std::string& line);

// Quotes a field only when it contains a delimiter, quote or newline.
std::string escape(std::string_view field);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

std::string_view trim(std::string_view text);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  Writer& field(std::string_view text);
  Writer& field(double value);
  Writer& field(long long value);
  Writer& field(int value) { return field(static_cast<long long>(value)); }
  Writer& field(std::size_t value) { return field(static_cast<long long>(value)); }
  void end_row();

  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  bool first_ = true;
};

}  // namespace expomatch::csv
