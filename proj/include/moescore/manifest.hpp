#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moescore {

enum class Split { kTrain, kDev, kTest };

std::string_view to_string(Split split);
// Throws ParameterError on anything but "train", "dev", "test".
Split parse_split(std::string_view name);

struct ManifestEntry {
  std::string pair_id;
  std::optional<double> label;
  Split split = Split::kTrain;
};

// One JSON object per line: {"pair_id": str, "label": number|null, "split": str}.
// Blank lines are skipped. Entries come back in file order.
std::vector<ManifestEntry> parse_manifest(std::istream& in);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split);

}  // namespace moescore
