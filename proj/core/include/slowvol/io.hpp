#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace slowvol {

// Flat "dotted.key = value" text config; '#' starts a comment.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;  // comma separated

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
  std::string origin_;
  [[noreturn]] void missing(const std::string& key) const;
};

std::string fmt17(double v);  // shortest round-trippable decimal, 17 significant digits

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void header(const std::vector<std::string>& cols);
  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& vals);

 private:
  std::ofstream out_;
  std::size_t n_cols_ = 0;
};

}  // namespace slowvol
