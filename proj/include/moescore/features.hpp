#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "moescore/errors.hpp"
#include "moescore/manifest.hpp"
#include "moescore/tensor.hpp"

namespace moescore {

// Directory holding the sequence expert's features under a feature root.
inline constexpr const char* kSequenceDir = "seq";

// Which feature files a run needs.
struct FeatureLayout {
  std::vector<std::string> similarity_experts;  // subdirectory name per pooled expert
  bool sequence = true;
};

struct PooledEmbedding {
  Tensor audio;  // [d_e]
  Tensor text;   // [d_e]
};

struct FeatureRecord {
  std::string pair_id;
  std::vector<PooledEmbedding> pooled;  // one per FeatureLayout::similarity_experts
  std::optional<Tensor> audio_layers;   // [L x T_a x d_a]
  std::optional<Tensor> text_seq;       // [T_t x d_t]
};

class MissingFeatureError : public IoError {
 public:
  using IoError::IoError;
};

class FeatureShapeError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

std::filesystem::path pooled_audio_path(const std::filesystem::path& root, const std::string& expert,
                                        const std::string& pair_id);
std::filesystem::path pooled_text_path(const std::filesystem::path& root, const std::string& expert,
                                       const std::string& pair_id);
std::filesystem::path audio_layers_path(const std::filesystem::path& root, const std::string& pair_id);
std::filesystem::path text_seq_path(const std::filesystem::path& root, const std::string& pair_id);

// Loads and validates every file the layout asks for. Missing files, wrong
// ranks, length mismatches and non-finite values each raise a distinct error
// that names the pair and the offending path.
FeatureRecord resolve_features(const std::filesystem::path& root, const ManifestEntry& entry,
                               const FeatureLayout& layout);

void write_features(const std::filesystem::path& root, const FeatureRecord& record,
                    const FeatureLayout& layout);

// Records of one split, aligned with `entries`.
struct Dataset {
  std::vector<ManifestEntry> entries;
  std::vector<FeatureRecord> records;

  std::size_t size() const { return records.size(); }
  // Throws ValidationError naming the first unlabeled pair.
  std::vector<double> labels() const;
};

// Loads every entry and checks that feature widths agree across records.
Dataset load_dataset(const std::filesystem::path& root, std::vector<ManifestEntry> entries,
                     const FeatureLayout& layout);

}  // namespace moescore
