#include "headprune/artifact.hpp"

#include <fstream>
#include <sstream>

namespace headprune {

std::string read_text_file(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(what + ": cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json read_json_file(const std::string& path, const std::string& what) {
  std::string text = read_text_file(path, what);
  Json doc = Json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ValidationError(what + ": " + path + " is not valid JSON");
  return doc;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out.good()) throw Error("short write to " + path);
}

void check_format_version(const Json& doc, const std::string& what) {
  if (!doc.contains("format_version") || !doc["format_version"].is_string()) {
    throw ValidationError(what + ": missing format_version");
  }
  const std::string v = doc["format_version"].get<std::string>();
  const std::string expect_major = std::string(kFormatVersion).substr(0, 1);
  if (v.substr(0, v.find('.')) != expect_major) {
    throw ValidationError(what + ": unsupported format_version " + v + " (expected major " +
                          expect_major + ")");
  }
}

}  // namespace headprune
