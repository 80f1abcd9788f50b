#include "moescore/features.hpp"

#include "moescore/mfv.hpp"

namespace moescore {

namespace fs = std::filesystem;

fs::path pooled_audio_path(const fs::path& root, const std::string& expert, const std::string& pair_id) {
  return root / expert / (pair_id + ".audio.mfv");
}

fs::path pooled_text_path(const fs::path& root, const std::string& expert, const std::string& pair_id) {
  return root / expert / (pair_id + ".text.mfv");
}

fs::path audio_layers_path(const fs::path& root, const std::string& pair_id) {
  return root / kSequenceDir / (pair_id + ".audio_layers.mfv");
}

fs::path text_seq_path(const fs::path& root, const std::string& pair_id) {
  return root / kSequenceDir / (pair_id + ".text_seq.mfv");
}

namespace {

Tensor load_checked(const fs::path& path, const std::string& pair_id, std::size_t rank) {
  if (!fs::exists(path)) {
    throw MissingFeatureError("pair '" + pair_id + "': missing feature file " + path.string());
  }
  Tensor t;
  try {
    t = read_mfv(path);
  } catch (const MfvFormatError& e) {
    throw MfvFormatError(e.kind(), e.offset(), "pair '" + pair_id + "': " + path.string());
  }
  if (t.rank() != rank) {
    throw FeatureShapeError("pair '" + pair_id + "': " + path.string() + " has rank " +
                            std::to_string(t.rank()) + ", expected rank " + std::to_string(rank));
  }
  if (!t.all_finite()) {
    throw ValidationError("pair '" + pair_id + "': " + path.string() + " contains non-finite values");
  }
  return t;
}

}  // namespace

FeatureRecord resolve_features(const fs::path& root, const ManifestEntry& entry,
                               const FeatureLayout& layout) {
  FeatureRecord record;
  record.pair_id = entry.pair_id;
  for (const auto& expert : layout.similarity_experts) {
    const auto audio_path = pooled_audio_path(root, expert, entry.pair_id);
    PooledEmbedding emb{load_checked(audio_path, entry.pair_id, 1),
                        load_checked(pooled_text_path(root, expert, entry.pair_id), entry.pair_id, 1)};
    if (emb.audio.size() != emb.text.size()) {
      throw FeatureShapeError("pair '" + entry.pair_id + "': expert " + expert +
                              " audio/text widths differ (" + std::to_string(emb.audio.size()) +
                              " vs " + std::to_string(emb.text.size()) + ") at " +
                              audio_path.string());
    }
    record.pooled.push_back(std::move(emb));
  }
  if (layout.sequence) {
    record.audio_layers = load_checked(audio_layers_path(root, entry.pair_id), entry.pair_id, 3);
    record.text_seq = load_checked(text_seq_path(root, entry.pair_id), entry.pair_id, 2);
  }
  return record;
}

void write_features(const fs::path& root, const FeatureRecord& record, const FeatureLayout& layout) {
  for (std::size_t e = 0; e < layout.similarity_experts.size(); ++e) {
    write_mfv(pooled_audio_path(root, layout.similarity_experts[e], record.pair_id), record.pooled[e].audio);
    write_mfv(pooled_text_path(root, layout.similarity_experts[e], record.pair_id), record.pooled[e].text);
  }
  if (layout.sequence) {
    write_mfv(audio_layers_path(root, record.pair_id), record.audio_layers.value());
    write_mfv(text_seq_path(root, record.pair_id), record.text_seq.value());
  }
}

std::vector<double> Dataset::labels() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    if (!e.label) throw ValidationError("pair '" + e.pair_id + "' has no label");
    out.push_back(*e.label);
  }
  return out;
}

Dataset load_dataset(const fs::path& root, std::vector<ManifestEntry> entries, const FeatureLayout& layout) {
  Dataset ds;
  ds.records.reserve(entries.size());
  for (const auto& e : entries) ds.records.push_back(resolve_features(root, e, layout));
  ds.entries = std::move(entries);

  // Widths must agree with the first record so one model fits the set.
  if (ds.records.empty()) return ds;
  const auto& first = ds.records.front();
  for (const auto& r : ds.records) {
    for (std::size_t e = 0; e < r.pooled.size(); ++e) {
      if (r.pooled[e].audio.size() != first.pooled[e].audio.size()) {
        throw FeatureShapeError("pair '" + r.pair_id + "': expert " + layout.similarity_experts[e] +
                                " width " + std::to_string(r.pooled[e].audio.size()) +
                                " differs from " + std::to_string(first.pooled[e].audio.size()));
      }
    }
    if (layout.sequence) {
      const auto& a = r.audio_layers->shape();
      const auto& a0 = first.audio_layers->shape();
      if (a[0] != a0[0] || a[2] != a0[2] || r.text_seq->dim(1) != first.text_seq->dim(1)) {
        throw FeatureShapeError("pair '" + r.pair_id + "': sequence feature widths " +
                                shape_to_string(a) + "/" + shape_to_string(r.text_seq->shape()) +
                                " disagree with " + shape_to_string(a0) + "/" +
                                shape_to_string(first.text_seq->shape()));
      }
    }
  }
  return ds;
}

}  // namespace moescore
