#include "moescore/manifest.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "moescore/errors.hpp"

namespace moescore {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw ParameterError("unknown split '" + std::string(name) + "'");
}

std::vector<ManifestEntry> parse_manifest(std::istream& in) {
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);

    ManifestEntry entry;
    auto id = obj.find("pair_id");
    if (id == obj.end() || !id->is_string() || id->get<std::string>().empty()) {
      throw ParseError("pair_id must be a nonempty string", line_no);
    }
    entry.pair_id = id->get<std::string>();

    auto split = obj.find("split");
    if (split == obj.end() || !split->is_string()) throw ParseError("split must be a string", line_no);
    try {
      entry.split = parse_split(split->get<std::string>());
    } catch (const ParameterError& e) {
      throw ParseError(e.what(), line_no);
    }

    auto label = obj.find("label");
    if (label != obj.end() && !label->is_null()) {
      if (!label->is_number()) throw ParseError("label must be a number or null", line_no);
      const double v = label->get<double>();
      if (!std::isfinite(v)) throw ParseError("label must be finite", line_no);
      entry.label = v;
    }

    if (!seen.insert(entry.pair_id).second) {
      throw ValidationError("duplicate pair_id '" + entry.pair_id + "' at line " +
                            std::to_string(line_no));
    }
    if (entry.split != Split::kTest && !entry.label) {
      throw ValidationError("pair_id '" + entry.pair_id + "' in split " +
                            std::string(to_string(entry.split)) + " has no label (line " +
                            std::to_string(line_no) + ")");
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in);
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    json obj = {{"pair_id", e.pair_id}, {"split", to_string(e.split)}};
    obj["label"] = e.label ? json(*e.label) : json(nullptr);
    out << obj.dump() << '\n';
  }
}

std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

}  // namespace moescore
