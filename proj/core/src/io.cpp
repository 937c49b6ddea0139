#include "noshow/io.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <atomic>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unistd.h>

#include "noshow/error.hpp"

namespace noshow {

std::optional<CsvRow> CsvReader::next() {
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int c;
  while ((c = in_.get()) != EOF) {
    any = true;
    char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      in_quotes = true;
    } else if (ch == delim_) {
      row.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      // tolerated before \n
    } else if (ch == '\n') {
      if (row.empty() && field.empty()) {
        any = false;
        continue;
      }
      row.push_back(std::move(field));
      return row;
    } else {
      field.push_back(ch);
    }
  }
  if (!any) return std::nullopt;
  row.push_back(std::move(field));
  return row;
}

std::string csv_escape(std::string_view field, char delimiter) {
  bool quote = field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) != std::string_view::npos;
  if (!quote) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv_row(std::ostream& out, const CsvRow& row, char delimiter) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.put(delimiter);
    out << csv_escape(row[i], delimiter);
  }
  out.put('\n');
}

std::string format_double(double value) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, r.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  double v = 0.0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view text) {
  long long v = 0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  KeyValueConfig cfg;
  for (const auto& [key, node] : tree) {
    if (!node.empty()) {
      throw Error(ErrorCode::InvalidArgument, "config: sections are not supported ([" + key + "])");
    }
    cfg.entries_.emplace_back(key, node.data());
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in);
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path.string());
  return parse(in);
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "config: " + key + " is not a number: " + *v);
  }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    long long d = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "config: " + key + " is not an integer: " + *v);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  auto s = boost::algorithm::to_lower_copy(*v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error(ErrorCode::InvalidArgument, "config: " + key + " is not a boolean: " + *v);
}

std::optional<std::vector<double>> KeyValueConfig::get_doubles(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  std::vector<std::string> parts;
  boost::algorithm::split(parts, *v, boost::is_any_of(","));
  std::vector<double> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (p.empty()) continue;
    try {
      out.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "config: " + key + " has a non-numeric entry: " + p);
    }
  }
  return out;
}

}  // namespace noshow
