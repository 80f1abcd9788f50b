#include "moescore/model.hpp"

#include <algorithm>
#include <bit>

#include "moescore/errors.hpp"
#include "moescore/mfv.hpp"
#include "moescore/parallel.hpp"

namespace moescore {

using nlohmann::json;

namespace {

constexpr std::uint64_t kExpertInitStream = 100;
constexpr std::uint64_t kGateInitStream = 200;

std::uint64_t ids_key(std::span<const int> ids) {
  std::uint64_t key = 0;
  for (int id : ids) key = key * 31 + static_cast<std::uint64_t>(id);
  return key;
}

}  // namespace

Model::Model(Config config) : config_(std::move(config)) {
  config_.validate();
  experts_.resize(static_cast<std::size_t>(max_expert_id()));
}

void Model::check_expert_id(int id) const {
  if (id < 1 || id > max_expert_id()) {
    throw ConfigError("unknown expert id " + std::to_string(id) + " (valid: 1.." +
                      std::to_string(max_expert_id()) + ")");
  }
}

bool Model::has_expert(int id) const {
  return id >= 1 && id <= max_expert_id() && experts_[static_cast<std::size_t>(id - 1)] != nullptr;
}

Expert& Model::expert(int id) {
  check_expert_id(id);
  auto& e = experts_[static_cast<std::size_t>(id - 1)];
  if (!e) throw ConfigError("expert " + std::to_string(id) + " is not loaded");
  return *e;
}

const Expert& Model::expert(int id) const { return const_cast<Model*>(this)->expert(id); }

std::vector<int> Model::expert_ids() const {
  std::vector<int> ids;
  for (int id = 1; id <= max_expert_id(); ++id) {
    if (has_expert(id)) ids.push_back(id);
  }
  return ids;
}

Expert& Model::create_expert(int id, const std::optional<Expert4Dims>& dims) {
  check_expert_id(id);
  auto& slot = experts_[static_cast<std::size_t>(id - 1)];
  if (id == sequence_id()) {
    if (!dims) throw ConfigError("the sequence expert needs input dimensions");
    auto e = std::make_unique<SeqCoAttnExpert>(config_.expert4, *dims, config_.range);
    Rng rng = Rng::derive(config_.seed, kExpertInitStream + static_cast<std::uint64_t>(id));
    e->params().init(rng);
    seq_dims_ = dims;
    slot = std::move(e);
  } else {
    slot = std::make_unique<SimilarityExpert>(static_cast<std::size_t>(id - 1), config_.range);
  }
  return *slot;
}

void Model::create_gate(std::vector<int> ids, std::size_t evidence_dim) {
  set_gate_experts(std::move(ids));
  if (gate_experts_.size() == 1) {
    gate_.reset();
    return;
  }
  gate_.emplace(evidence_dim, config_.gate.hidden_dim, gate_experts_.size());
  Rng rng = Rng::derive(config_.seed, kGateInitStream + ids_key(gate_experts_));
  gate_->init(rng);
}

void Model::set_gate_experts(std::vector<int> ids) {
  if (ids.empty()) throw ConfigError("expert subset is empty");
  for (int id : ids) check_expert_id(id);
  auto sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("expert subset lists an expert twice");
  }
  gate_experts_ = std::move(ids);
}

FeatureLayout Model::layout_for(std::span<const int> ids) const {
  FeatureLayout layout;
  layout.similarity_experts = config_.similarity_experts;
  layout.sequence = std::find(ids.begin(), ids.end(), sequence_id()) != ids.end();
  return layout;
}

std::vector<const Expert*> Model::experts_for(std::span<const int> ids) const {
  std::vector<const Expert*> out;
  for (int id : ids) out.push_back(&expert(id));
  return out;
}

ScoredPair Model::predict(const FeatureRecord& record) const {
  if (gate_experts_.empty()) throw ConfigError("model has no expert subset to predict with");
  const auto experts = experts_for(gate_experts_);
  Rng unused(0);
  ScoredPair pair = moe_forward(record, experts, gate(), Mode::kEval, unused);
  pair.expert_ids = gate_experts_;
  return pair;
}

std::vector<ScoredPair> Model::predict_all(std::span<const FeatureRecord> records, bool parallel) const {
  std::vector<ScoredPair> out(records.size());
  for_each_index(records.size(), parallel, [&](std::size_t i) { out[i] = predict(records[i]); });
  return out;
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  for (int id : expert_ids()) {
    for (auto& p : expert(id).parameters()) {
      out.push_back({"expert" + std::to_string(id) + "." + p.name, p.tensor});
    }
  }
  if (gate_) {
    for (auto& p : gate_->parameters()) out.push_back({"gate." + p.name, p.tensor});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointIo {
  static constexpr std::uint8_t kMagic[4] = {'M', 'C', 'K', '1'};

  static void save(const std::filesystem::path& path, Model& model) {
    json index;
    index["format"] = "MCK1";
    index["seed"] = model.config_.seed;
    index["config"] = model.config_.model_json();
    index["sequence_dims"] =
        model.seq_dims_ && model.has_expert(model.sequence_id())
            ? json{{"layers", model.seq_dims_->layers},
                   {"audio_dim", model.seq_dims_->audio_dim},
                   {"text_dim", model.seq_dims_->text_dim}}
            : json(nullptr);
    index["gate_experts"] = model.gate_experts_;
    index["gate_evidence_dim"] = model.gate_ ? json(model.gate_->evidence_dim()) : json(nullptr);

    std::vector<std::uint8_t> blocks;
    json params = json::array();
    for (const auto& p : model.parameters()) {
      const auto bytes = encode_mfv(*p.tensor);
      params.push_back({{"name", p.name},
                        {"frozen", !p.tensor->requires_grad()},
                        {"shape", p.tensor->shape()},
                        {"offset", blocks.size()},
                        {"length", bytes.size()}});
      blocks.insert(blocks.end(), bytes.begin(), bytes.end());
    }
    index["params"] = params;

    const std::string text = index.dump();
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    const auto len = static_cast<std::uint64_t>(text.size());
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(len >> s));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), blocks.begin(), blocks.end());
    write_file_bytes(path, out);
  }

  struct Parsed {
    json index;
    std::vector<std::uint8_t> bytes;
    std::size_t blocks_at = 0;
  };

  static Parsed parse(const std::filesystem::path& path) {
    Parsed p;
    p.bytes = read_file_bytes(path);
    const auto& b = p.bytes;
    if (b.size() < 12 || !std::equal(std::begin(kMagic), std::end(kMagic), b.begin())) {
      throw ValidationError("checkpoint " + path.string() + ": bad magic, expected MCK1");
    }
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(b[4 + i]) << (8 * i);
    if (len > b.size() - 12) throw ValidationError("checkpoint " + path.string() + ": truncated index");
    try {
      p.index = json::parse(b.begin() + 12, b.begin() + 12 + static_cast<std::ptrdiff_t>(len));
    } catch (const json::parse_error& e) {
      throw ValidationError("checkpoint " + path.string() + ": malformed index: " + e.what());
    }
    p.blocks_at = 12 + len;
    return p;
  }

  static void compare_config(const json& stored, const json& wanted, const std::string& prefix,
                             const std::filesystem::path& path) {
    for (const auto& [key, value] : wanted.items()) {
      const std::string field = prefix.empty() ? key : prefix + "." + key;
      if (!stored.contains(key)) throw ConfigError("missing from checkpoint " + path.string(), field);
      if (value.is_object()) {
        compare_config(stored.at(key), value, field, path);
      } else if (stored.at(key) != value) {
        throw ConfigError("checkpoint " + path.string() + " has " + stored.at(key).dump() +
                              ", run config has " + value.dump(),
                          field);
      }
    }
  }

  static void load(const std::filesystem::path& path, Model& model) {
    Parsed parsed = parse(path);
    const json& index = parsed.index;
    compare_config(index.at("config"), model.config_.model_json(), "", path);

    // Create the experts this file carries.
    std::vector<int> file_experts;
    for (const auto& p : index.at("params")) {
      const std::string name = p.at("name").get<std::string>();
      if (name.rfind("expert", 0) == 0) {
        const int id = std::stoi(name.substr(6, name.find('.') - 6));
        if (std::find(file_experts.begin(), file_experts.end(), id) == file_experts.end()) {
          file_experts.push_back(id);
        }
      }
    }
    for (int id : file_experts) {
      if (model.has_expert(id)) {
        throw ConfigError("expert " + std::to_string(id) + " is defined by more than one checkpoint (" +
                          path.string() + ")");
      }
      std::optional<Expert4Dims> dims;
      if (id == model.sequence_id()) {
        const auto& d = index.at("sequence_dims");
        if (d.is_null()) throw ValidationError("checkpoint " + path.string() + ": missing sequence_dims");
        dims = Expert4Dims{d.at("layers").get<std::size_t>(), d.at("audio_dim").get<std::size_t>(),
                           d.at("text_dim").get<std::size_t>()};
      }
      model.create_expert(id, dims);
    }
    const auto gate_ids = index.at("gate_experts").get<std::vector<int>>();
    if (!index.at("gate_evidence_dim").is_null()) {
      model.create_gate(gate_ids, index.at("gate_evidence_dim").get<std::size_t>());
    } else if (!gate_ids.empty()) {
      model.set_gate_experts(gate_ids);
    }

    std::vector<ParamRef> targets = model.parameters();
    for (const auto& p : index.at("params")) {
      const std::string name = p.at("name").get<std::string>();
      auto it = std::find_if(targets.begin(), targets.end(), [&](const ParamRef& r) { return r.name == name; });
      if (it == targets.end()) throw ValidationError("checkpoint " + path.string() + ": unexpected parameter " + name);
      const std::size_t offset = parsed.blocks_at + p.at("offset").get<std::size_t>();
      const std::size_t length = p.at("length").get<std::size_t>();
      if (offset > parsed.bytes.size() || length > parsed.bytes.size() - offset) {
        throw ValidationError("checkpoint " + path.string() + ": block for " + name + " out of bounds");
      }
      Tensor t = decode_mfv(std::span(parsed.bytes).subspan(offset, length), path.string() + ":" + name);
      if (t.shape() != it->tensor->shape()) {
        throw ConfigError("checkpoint " + path.string() + ": parameter " + name + " has shape " +
                          shape_to_string(t.shape()) + ", model expects " +
                          shape_to_string(it->tensor->shape()));
      }
      std::copy(t.data().begin(), t.data().end(), it->tensor->data().begin());
      it->tensor->set_requires_grad(!p.at("frozen").get<bool>());
      it->tensor->zero_grad();
    }
  }
};

void save_checkpoint(const std::filesystem::path& path, Model& model) { CheckpointIo::save(path, model); }

void load_checkpoint(const std::filesystem::path& path, Model& model) {
  try {
    CheckpointIo::load(path, model);
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + ": malformed index: " + e.what());
  }
}

json read_checkpoint_index(const std::filesystem::path& path) { return CheckpointIo::parse(path).index; }

}  // namespace moescore
