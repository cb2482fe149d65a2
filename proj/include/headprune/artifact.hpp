#pragma once

#include <string>

#include <json.hpp>

#include "headprune/common.hpp"

namespace headprune {

// Every on-disk artifact starts with a format_version field ("major.minor");
// loaders reject unknown majors and tolerate newer minors.
inline constexpr const char* kFormatVersion = "1.0";

using Json = nlohmann::ordered_json;

Json read_json_file(const std::string& path, const std::string& what);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path, const std::string& what);
void check_format_version(const Json& doc, const std::string& what);

// Runs a block of field extraction, turning missing/mistyped fields into the
// validation errors the CLI maps to its invalid-artifact exit code.
template <typename Fn>
auto extract_fields(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

}  // namespace headprune
