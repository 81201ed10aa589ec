#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xferlens::csv {

/// One parsed data line with its 1-based line number in the source file.
struct Row {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

struct Table {
  std::string path;
  std::vector<std::string> header;
  std::vector<Row> rows;
};

/// Reads a comma-separated file. Blank lines and lines starting with '#' are
/// skipped; double-quoted cells may contain commas. Throws InputError when
/// the file cannot be opened or a row has the wrong cell count.
Table read_file(const std::string& path);
Table read_stream(std::istream& in, const std::string& name);

/// Requires the header to equal `required` optionally followed by any prefix
/// of `optional`.
void require_header(const Table& t, const std::vector<std::string>& required,
                    const std::vector<std::string>& optional = {});

/// Locale-independent decimal parse of the whole cell.
std::optional<double> parse_double(std::string_view s);
double parse_double_or_throw(const Table& t, const Row& r, std::size_t col);
long long parse_int_or_throw(const Table& t, const Row& r, std::size_t col);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
std::string quote(std::string_view cell);

}  // namespace xferlens::csv
