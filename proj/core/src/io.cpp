#include "slowvol/io.hpp"

#include <cstdio>

#include "slowvol/common.hpp"

namespace slowvol {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_string(text, path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    std::string line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    pos = end == std::string::npos ? text.size() + 1 : end + 1;
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw validation_error("config " + origin + ":" + std::to_string(line_no) +
                             ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw validation_error("config " + origin + ":" + std::to_string(line_no) +
                             ": empty key");
    cfg.kv_[key] = val;
  }
  return cfg;
}

void Config::missing(const std::string& key) const {
  throw validation_error("config " + origin_ + ": missing required key '" + key + "'");
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) missing(key);
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  std::string v = get_string(key);
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw validation_error("config " + origin_ + ": key '" + key + "': not a number: " + v);
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long Config::get_long(const std::string& key) const {
  std::string v = get_string(key);
  try {
    std::size_t used = 0;
    long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw validation_error("config " + origin_ + ": key '" + key + "': not an integer: " + v);
  }
}

long Config::get_long(const std::string& key, long fallback) const {
  return has(key) ? get_long(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw validation_error("config " + origin_ + ": key '" + key + "': not a boolean: " + v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::string v = get_string(key);
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    std::size_t comma = v.find(',', pos);
    std::string item = trim(v.substr(pos, comma == std::string::npos ? std::string::npos
                                                                     : comma - pos));
    if (!item.empty()) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw validation_error("config " + origin_ + ": key '" + key +
                               "': bad list element: " + item);
      }
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty())
    throw validation_error("config " + origin_ + ": key '" + key + "': empty list");
  return out;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path) {
  if (!out_) throw validation_error("csv: cannot open " + path + " for writing");
}

void CsvWriter::header(const std::vector<std::string>& cols) {
  n_cols_ = cols.size();
  for (std::size_t i = 0; i < cols.size(); ++i)
    out_ << cols[i] << (i + 1 == cols.size() ? "\n" : ",");
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (n_cols_ != 0 && cells.size() != n_cols_)
    throw validation_error("csv: row width does not match the header");
  for (std::size_t i = 0; i < cells.size(); ++i)
    out_ << cells[i] << (i + 1 == cells.size() ? "\n" : ",");
}

void CsvWriter::row(const std::vector<double>& vals) {
  std::vector<std::string> cells;
  cells.reserve(vals.size());
  for (double v : vals) cells.push_back(fmt17(v));
  row(cells);
}

}  // namespace slowvol
