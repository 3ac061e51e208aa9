#pragma once

// JSON helpers shared by the record readers and writers. Private to evil_core.

#include <string>
#include <string_view>

#include "evil/corpus.hpp"
#include "json.hpp"

namespace evil::detail {

inline bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

// Output files may begin with a {"_meta": {...}} line carrying the config
// digest; readers skip it.
inline bool is_meta(const nlohmann::json& j) { return j.is_object() && j.contains("_meta"); }

inline nlohmann::json parse_line(std::string_view line) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  }
}

template <typename T>
T require(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DataError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("wrong type for field '") + key + "'");
  }
}

inline const nlohmann::json& require_array(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_array()) {
    throw DataError(std::string("missing array field '") + key + "'");
  }
  return j.at(key);
}

}  // namespace evil::detail
