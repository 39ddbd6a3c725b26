#pragma once

#include <stdexcept>
#include <string>

namespace liad {

/// Raised when a simulation or run configuration is inconsistent.
/// `key_path()` names the offending entry (e.g. "gas.pressure_mbar") when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message, std::string key_path = {})
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace liad
