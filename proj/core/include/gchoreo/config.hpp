#pragma once

// key=value text configuration. Blank lines and lines starting with '#'
// are ignored; keys are unique.

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace gchoreo {

class KeyValues {
 public:
  static KeyValues parse(std::string_view text, std::string_view source = "config");
  static KeyValues load(const std::filesystem::path& path);

  bool has(std::string_view key) const { return entries_.find(std::string(key)) != entries_.end(); }
  std::optional<std::string> get(std::string_view key) const;
  void set(std::string_view key, std::string value) { entries_[std::string(key)] = std::move(value); }

  std::string str(std::string_view key, std::string_view fallback) const;
  double real(std::string_view key, double fallback) const;
  std::int64_t integer(std::string_view key, std::int64_t fallback) const;
  std::uint64_t unsigned_integer(std::string_view key, std::uint64_t fallback) const;
  bool boolean(std::string_view key, bool fallback) const;  // true/false/1/0

  // Throws ValidationError listing keys outside `known`.
  void reject_unknown(std::initializer_list<std::string_view> known) const;

  // Sorted key=value lines.
  std::string render() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::string source_ = "config";
  std::map<std::string, std::string> entries_;
};

}  // namespace gchoreo
