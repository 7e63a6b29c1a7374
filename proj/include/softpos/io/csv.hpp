#pragma once

// Time-series CSV: header row "t,<name>,...", one row per sample, '.' decimal
// point, no thousands separators, strictly increasing t, no missing cells.
// Numbers are written in shortest round-trip form so a file read back and
// written again is byte-identical.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "softpos/errors.hpp"

namespace softpos::io {

struct TimeSeries {
  std::vector<std::string> names;            // excludes "t"
  std::vector<double> t;
  std::vector<std::vector<double>> columns;  // one per name, each t.size() long

  std::size_t rows() const { return t.size(); }

  /// Column by name; throws InvalidInput if absent.
  const std::vector<double>& column(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return columns[i];
    }
    throw InvalidInput("time series: no column named '" + std::string(name) + "'");
  }

  bool has(std::string_view name) const {
    for (const auto& n : names) {
      if (n == name) return true;
    }
    return false;
  }

  void add_column(std::string name, std::vector<double> values) {
    if (values.size() != t.size()) throw InvalidInput("time series: column '" + name + "' length mismatch");
    names.push_back(std::move(name));
    columns.push_back(std::move(values));
  }
};

class CsvParseError : public InvalidInput {
 public:
  CsvParseError(std::size_t line, const std::string& what)
      : InvalidInput("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline void write_csv(std::ostream& os, const TimeSeries& ts) {
  for (const auto& c : ts.columns) {
    if (c.size() != ts.t.size()) throw InvalidInput("write_csv: column length mismatch");
  }
  os << 't';
  for (const auto& n : ts.names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < ts.t.size(); ++i) {
    os << format_double(ts.t[i]);
    for (const auto& c : ts.columns) os << ',' << format_double(c[i]);
    os << '\n';
  }
}

inline std::string to_csv(const TimeSeries& ts) {
  std::ostringstream os;
  write_csv(os, ts);
  return os.str();
}

namespace csv_detail {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

}  // namespace csv_detail

inline TimeSeries parse_csv(std::istream& is) {
  TimeSeries ts;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      const auto cells = csv_detail::split(line);
      if (cells.empty() || cells[0] != "t") throw CsvParseError(lineno, "header must start with column 't'");
      for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i].empty()) throw CsvParseError(lineno, "empty column name");
        ts.names.emplace_back(cells[i]);
      }
      ts.columns.resize(ts.names.size());
      width = cells.size();
      continue;
    }
    if (line.empty()) {
      // A single trailing newline is fine; blank lines inside the data are not.
      if (is.peek() == std::char_traits<char>::eof()) break;
      throw CsvParseError(lineno, "blank line");
    }
    const auto cells = csv_detail::split(line);
    if (cells.size() != width) {
      throw CsvParseError(lineno, "expected " + std::to_string(width) + " cells, found " +
                                      std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto cell = cells[i];
      if (cell.empty()) throw CsvParseError(lineno, "missing value in column " + std::to_string(i + 1));
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw CsvParseError(lineno, "cannot parse '" + std::string(cell) + "' as a number");
      }
      if (!std::isfinite(v)) throw CsvParseError(lineno, "non-finite value");
      if (i == 0) {
        if (!ts.t.empty() && !(v > ts.t.back())) throw CsvParseError(lineno, "t must be strictly increasing");
        ts.t.push_back(v);
      } else {
        ts.columns[i - 1].push_back(v);
      }
    }
  }
  if (lineno == 0) throw CsvParseError(1, "empty file");
  return ts;
}

inline TimeSeries parse_csv(std::string_view text) {
  std::istringstream is{std::string(text)};
  return parse_csv(is);
}

inline TimeSeries read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open " + path);
  try {
    return parse_csv(f);
  } catch (const CsvParseError& e) {
    throw CsvParseError(e.line(), std::string(e.what()).substr(std::string(e.what()).find(": ") + 2) + " (" +
                                      path + ")");
  }
}

inline void write_csv_file(const std::string& path, const TimeSeries& ts) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidInput("cannot write " + path);
  write_csv(f, ts);
  if (!f) throw InvalidInput("error writing " + path);
}

}  // namespace softpos::io
