#include "xferlens/csv.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "xferlens/errors.hpp"

namespace xferlens::csv {

namespace {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

}  // namespace

Table read_stream(std::istream& in, const std::string& name) {
  Table t;
  t.path = name;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
      line.erase(0, 3);
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto cells = split_line(sv);
    for (auto& c : cells) c = std::string(trim(c));
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw InputError(name, lineno,
                       "expected " + std::to_string(t.header.size()) + " cells, found " +
                           std::to_string(cells.size()));
    }
    t.rows.push_back(Row{lineno, std::move(cells)});
  }
  if (!have_header) throw InputError(name, 1, "missing header");
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path, 0, "cannot open file");
  return read_stream(in, path);
}

void require_header(const Table& t, const std::vector<std::string>& required,
                    const std::vector<std::string>& optional) {
  bool ok = t.header.size() >= required.size() &&
            t.header.size() <= required.size() + optional.size();
  for (std::size_t i = 0; ok && i < t.header.size(); ++i) {
    const std::string& want =
        i < required.size() ? required[i] : optional[i - required.size()];
    ok = t.header[i] == want;
  }
  if (!ok) {
    std::string expected = join(required);
    if (!optional.empty()) expected += "[," + join(optional) + "]";
    throw InputError(t.path, 1, "header mismatch: expected '" + expected + "', found '" +
                                    join(t.header) + "'");
  }
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

double parse_double_or_throw(const Table& t, const Row& r, std::size_t col) {
  auto v = parse_double(r.cells[col]);
  if (!v || !std::isfinite(*v))
    throw InputError(t.path, r.line,
                     "column '" + t.header[col] + "': not a number: '" + r.cells[col] + "'");
  return *v;
}

long long parse_int_or_throw(const Table& t, const Row& r, std::size_t col) {
  std::string_view s = trim(r.cells[col]);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw InputError(t.path, r.line,
                     "column '" + t.header[col] + "': not an integer: '" + r.cells[col] + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string quote(std::string_view cell) {
  if (cell.find_first_of(",\"\n") == std::string_view::npos) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace xferlens::csv
