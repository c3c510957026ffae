#pragma once

#include <boost/property_tree/ptree.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stigma::pipeline {

// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "STIGMA_CONFIG";

/// INI configuration (`[section]` then `key = value`). Every key has a
/// default; files and overrides may only set known keys. All lookup and
/// parse failures throw ConfigError.
class Config {
 public:
  static Config defaults();
  static std::string default_text();

  // Defaults overlaid with the file.
  static Config load(const std::filesystem::path& path);

  void merge_ini(std::string_view text, const std::string& origin);

  // "section.key=value"
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  // Comma-separated, entries trimmed, empty entries dropped.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::size_t> get_size_list(const std::string& key) const;

  std::uint64_t master_seed() const { return get_u64("run.seed"); }

  std::string to_ini() const;
  const boost::property_tree::ptree& tree() const { return tree_; }

 private:
  boost::property_tree::ptree tree_;
};

}  // namespace stigma::pipeline
