#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace noshow {

// ---- CSV -------------------------------------------------------------------

using CsvRow = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may contain commas, quotes ("") and newlines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in, char delimiter = ',') : in_(in), delim_(delimiter) {}

  /// Next record, or nullopt at end of input. Blank lines are skipped.
  std::optional<CsvRow> next();

 private:
  std::istream& in_;
  char delim_;
};

std::string csv_escape(std::string_view field, char delimiter = ',');
void write_csv_row(std::ostream& out, const CsvRow& row, char delimiter = ',');

/// Shortest representation that parses back to the same double.
std::string format_double(double value);
/// Strict full-string parse.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

// ---- files -----------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// ---- key-value config ------------------------------------------------------

/// `key = value` lines, `#`/`;` comments. Keys are unique; order is kept.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  std::optional<std::string> get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated doubles.
  std::optional<std::vector<double>> get_doubles(const std::string& key) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace noshow
