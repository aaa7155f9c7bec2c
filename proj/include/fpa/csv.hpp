#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fpa/error.hpp"

namespace fpa::csv {

struct Table
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers; // 1-based source line of each row

  std::optional<std::size_t> column(std::string_view name) const
  {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name)
        return i;
    return std::nullopt;
  }
};

namespace detail {

inline std::string trim(std::string_view s)
{
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one record; double quotes escape commas and "" is a literal quote.
inline std::vector<std::string> split_record(std::string_view line)
{
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

} // namespace detail

inline Table read(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw MissingFile(path);
  Table table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 &&
        static_cast<unsigned char>(line[0]) == 0xEF)
      line.erase(0, 3); // UTF-8 BOM
    if (detail::trim(line).empty())
      continue;
    auto fields = detail::split_record(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(lineno);
  }
  if (!have_header)
    throw EmptyInput("empty input: " + path);
  return table;
}

//! Parses a finite double; throws ParseError with context otherwise.
inline double parse_double(const std::string& text, const std::string& context)
{
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ParseError(context + ": not a finite number: '" + text + "'");
  return value;
}

inline long long parse_int(const std::string& text, const std::string& context)
{
  long long value = 0;
  auto [ptr, ec] =
    std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ParseError(context + ": not an integer: '" + text + "'");
  return value;
}

//! Shortest round-trip decimal representation; identical across runs.
inline std::string format(double x)
{
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc())
    return "nan";
  return std::string(buf, ptr);
}

//! RFC-4180 quoting for a single field.
inline std::string escape(std::string_view field)
{
  if (field.find_first_of(",\"\r\n") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"')
      out += "\"\"";
    else
      out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields)
{
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i)
      out << ',';
    out << escape(fields[i]);
  }
  out << "\r\n";
}

} // namespace fpa::csv
