#include "moescore/config.hpp"

#include <fstream>
#include <set>

#include "moescore/errors.hpp"

namespace moescore {

using nlohmann::json;

namespace {

// Accepts both signed and unsigned JSON integers that are >= 0.
bool is_count(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError("expected an object", path.empty() ? "<root>" : path);
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown field", join(path, key));
  }
}

double get_number(const json& obj, const std::string& path, const char* key, double fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) throw ConfigError("expected a number", join(path, key));
  return it->get<double>();
}

std::size_t get_count(const json& obj, const std::string& path, const char* key, std::size_t fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!is_count(*it)) throw ConfigError("expected a non-negative integer", join(path, key));
  return it->get<std::size_t>();
}

TrainConfig train_from_json(const json& obj, const std::string& path) {
  TrainConfig t;
  reject_unknown(obj, path,
                 {"batch_size", "epochs", "lr", "beta1", "beta2", "pair_strategy", "k_pairs", "patience", "loss"});
  t.batch_size = get_count(obj, path, "batch_size", t.batch_size);
  t.epochs = get_count(obj, path, "epochs", t.epochs);
  t.lr = get_number(obj, path, "lr", t.lr);
  t.beta1 = get_number(obj, path, "beta1", t.beta1);
  t.beta2 = get_number(obj, path, "beta2", t.beta2);
  t.k_pairs = get_count(obj, path, "k_pairs", t.k_pairs);
  t.patience = get_count(obj, path, "patience", t.patience);
  if (auto it = obj.find("pair_strategy"); it != obj.end()) {
    const std::string field = join(path, "pair_strategy");
    if (!it->is_string()) throw ConfigError("expected a string", field);
    const auto s = it->get<std::string>();
    if (s == "all_in_batch") {
      t.pair_strategy = PairStrategy::kAllInBatch;
    } else if (s == "random_k") {
      t.pair_strategy = PairStrategy::kRandomK;
    } else {
      throw ConfigError("expected all_in_batch or random_k", field);
    }
  }
  if (auto it = obj.find("loss"); it != obj.end()) {
    const std::string lp = join(path, "loss");
    reject_unknown(*it, lp, {"epsilon", "tau", "beta", "gamma"});
    t.loss.epsilon = get_number(*it, lp, "epsilon", t.loss.epsilon);
    t.loss.tau = get_number(*it, lp, "tau", t.loss.tau);
    t.loss.beta = get_number(*it, lp, "beta", t.loss.beta);
    t.loss.gamma = get_number(*it, lp, "gamma", t.loss.gamma);
  }
  return t;
}

json train_to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"lr", t.lr},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"pair_strategy", t.pair_strategy == PairStrategy::kAllInBatch ? "all_in_batch" : "random_k"},
          {"k_pairs", t.k_pairs},
          {"patience", t.patience},
          {"loss", {{"epsilon", t.loss.epsilon}, {"tau", t.loss.tau}, {"beta", t.loss.beta}, {"gamma", t.loss.gamma}}}};
}

}  // namespace

void TrainConfig::validate(const std::string& prefix) const {
  try {
    loss.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("invalid loss weights", prefix + "." + e.field());
  }
  if (epochs == 0) throw ConfigError("must be >= 1", prefix + ".epochs");
  if (batch_size == 0) throw ConfigError("must be >= 1", prefix + ".batch_size");
  if (loss.gamma > 0.0 && batch_size < 2) {
    throw ConfigError("contrastive pairs need batch_size >= 2", prefix + ".batch_size");
  }
  if (!(lr >= 0.0)) throw ConfigError("must be >= 0", prefix + ".lr");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("must lie in [0, 1)", prefix + ".beta1");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("must lie in [0, 1)", prefix + ".beta2");
  if (pair_strategy == PairStrategy::kRandomK && k_pairs == 0) {
    throw ConfigError("random_k needs k_pairs >= 1", prefix + ".k_pairs");
  }
}

void Config::validate() const {
  try {
    range.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), "score_range");
  }
  if (similarity_experts.empty()) throw ConfigError("need at least one name", "similarity_experts");
  for (const auto& name : similarity_experts) {
    if (name.empty() || name == kSequenceDir || name.find('/') != std::string::npos) {
      throw ConfigError("invalid expert directory name '" + name + "'", "similarity_experts");
    }
  }
  expert4.validate();
  if (gate.hidden_dim == 0) throw ConfigError("must be >= 1", "gate.hidden_dim");
  train.validate("train");
  gate_train.validate("gate_train");
}

Config Config::from_json(const json& doc) {
  Config c;
  reject_unknown(doc, "", {"seed", "score_range", "similarity_experts", "expert4", "gate", "train", "gate_train"});
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!is_count(*it)) throw ConfigError("expected a non-negative integer", "seed");
    c.seed = it->get<std::uint64_t>();
  }
  if (auto it = doc.find("score_range"); it != doc.end()) {
    reject_unknown(*it, "score_range", {"min", "max"});
    c.range.min = get_number(*it, "score_range", "min", c.range.min);
    c.range.max = get_number(*it, "score_range", "max", c.range.max);
  }
  if (auto it = doc.find("similarity_experts"); it != doc.end()) {
    if (!it->is_array()) throw ConfigError("expected an array of strings", "similarity_experts");
    c.similarity_experts.clear();
    for (const auto& v : *it) {
      if (!v.is_string()) throw ConfigError("expected an array of strings", "similarity_experts");
      c.similarity_experts.push_back(v.get<std::string>());
    }
  }
  if (auto it = doc.find("expert4"); it != doc.end()) {
    reject_unknown(*it, "expert4", {"model_dim", "heads", "hidden_dim", "dropout"});
    c.expert4.model_dim = get_count(*it, "expert4", "model_dim", c.expert4.model_dim);
    c.expert4.heads = get_count(*it, "expert4", "heads", c.expert4.heads);
    c.expert4.hidden_dim = get_count(*it, "expert4", "hidden_dim", c.expert4.hidden_dim);
    c.expert4.dropout = get_number(*it, "expert4", "dropout", c.expert4.dropout);
  }
  if (auto it = doc.find("gate"); it != doc.end()) {
    reject_unknown(*it, "gate", {"hidden_dim"});
    c.gate.hidden_dim = get_count(*it, "gate", "hidden_dim", c.gate.hidden_dim);
  }
  if (auto it = doc.find("train"); it != doc.end()) c.train = train_from_json(*it, "train");
  if (auto it = doc.find("gate_train"); it != doc.end()) c.gate_train = train_from_json(*it, "gate_train");
  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what(), "<root>");
  }
  return from_json(doc);
}

json Config::model_json() const {
  return {{"score_range", {{"min", range.min}, {"max", range.max}}},
          {"similarity_experts", similarity_experts},
          {"expert4",
           {{"model_dim", expert4.model_dim},
            {"heads", expert4.heads},
            {"hidden_dim", expert4.hidden_dim},
            {"dropout", expert4.dropout}}},
          {"gate", {{"hidden_dim", gate.hidden_dim}}}};
}

json Config::to_json() const {
  json doc = model_json();
  doc["seed"] = seed;
  doc["train"] = train_to_json(train);
  doc["gate_train"] = train_to_json(gate_train);
  return doc;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like field.path=value", assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty path segment", path);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace moescore
