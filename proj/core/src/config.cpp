#include "gchoreo/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

KeyValues KeyValues::parse(std::string_view text_in, std::string_view source) {
  KeyValues kv;
  kv.source_ = std::string(source);
  int line_no = 0;
  for (auto raw : text::split(text_in, '\n')) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(kv.source_ + ":" + std::to_string(line_no) + ": expected key=value, got '" +
                            std::string(line) + "'");
    }
    const std::string key(text::trim(line.substr(0, eq)));
    if (key.empty()) throw ValidationError(kv.source_ + ":" + std::to_string(line_no) + ": empty key");
    if (kv.entries_.count(key)) {
      throw ValidationError(kv.source_ + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    kv.entries_[key] = std::string(text::trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValues::get(std::string_view key) const {
  auto it = entries_.find(std::string(key));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValues::str(std::string_view key, std::string_view fallback) const {
  auto v = get(key);
  return v ? *v : std::string(fallback);
}

double KeyValues::real(std::string_view key, double fallback) const {
  auto v = get(key);
  return v ? text::parse_double(*v, source_ + " key " + std::string(key)) : fallback;
}

std::int64_t KeyValues::integer(std::string_view key, std::int64_t fallback) const {
  auto v = get(key);
  return v ? text::parse_int(*v, source_ + " key " + std::string(key)) : fallback;
}

std::uint64_t KeyValues::unsigned_integer(std::string_view key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? text::parse_uint(*v, source_ + " key " + std::string(key)) : fallback;
}

bool KeyValues::boolean(std::string_view key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ValidationError(source_ + " key " + std::string(key) + ": expected true/false, got '" + *v + "'");
}

void KeyValues::reject_unknown(std::initializer_list<std::string_view> known) const {
  std::string bad;
  for (const auto& [k, v] : entries_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) bad += (bad.empty() ? "" : ", ") + k;
  }
  if (!bad.empty()) throw ValidationError(source_ + ": unknown keys: " + bad);
}

std::string KeyValues::render() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace gchoreo
