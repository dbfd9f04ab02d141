#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace strc {

struct ConfigKey {
  std::string key;  ///< "section.name" or a bare global name
  std::string default_value;
  std::string help;
  bool flag = false;  ///< boolean switch on the command line
};

/// Every knob the pipeline understands, in snapshot order.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value configuration. Resolution order: defaults, then a config
/// file, then command-line values; the last writer wins.
class RunConfig {
 public:
  RunConfig();

  /// Throws ConfigError for an unknown key.
  void set(const std::string& key, const std::string& value);
  /// `key = value` lines; `#` comments and blank lines ignored.
  void merge_text(const std::string& text, const std::string& origin = "config");
  void merge_file(const std::filesystem::path& path);

  const std::string& str(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;

  /// All resolved values in config_keys() order, one `key=value` per line.
  std::string snapshot() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace strc
