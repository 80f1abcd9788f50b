#include "moescore/cli.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "moescore/config.hpp"
#include "moescore/errors.hpp"
#include "moescore/features.hpp"
#include "moescore/manifest.hpp"
#include "moescore/metrics.hpp"
#include "moescore/mfv.hpp"
#include "moescore/model.hpp"
#include "moescore/synth.hpp"
#include "moescore/training.hpp"

namespace moescore {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults when omitted)");
  cmd->add_option("--set", o.overrides, "Override one config field, e.g. train.lr=0.01");
  cmd->add_option("--seed", o.seed, "Override the config seed");
}

Config load_run_config(const RunOptions& o) {
  json doc = json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open " + o.config_path, "--config");
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("malformed JSON: ") + e.what(), "<root>");
    }
  }
  for (const auto& s : o.overrides) apply_override(doc, s);
  if (o.seed) doc["seed"] = *o.seed;
  return Config::from_json(doc);
}

Dataset load_split(const fs::path& root, const std::vector<ManifestEntry>& manifest, Split split,
                   const FeatureLayout& layout) {
  return load_dataset(root, filter_split(manifest, split), layout);
}

void write_history(const std::string& path, const TrainHistory& h) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write history " + path);
  for (const auto& r : h.epochs) out << to_json(r).dump() << '\n';
}

std::optional<Expert4Dims> sequence_dims(const Model& model, int id, const Dataset& ds) {
  if (id != model.sequence_id()) return std::nullopt;
  if (ds.records.empty()) throw ValidationError("no records to size the sequence expert");
  return Expert4Dims::of(ds.records.front());
}

std::size_t gate_evidence_dim(const Model& model, const std::vector<int>& ids, const FeatureRecord& record) {
  std::vector<ExpertOutput> outs;
  for (int id : ids) outs.push_back(model.expert(id).predict(record));
  return evidence_width(outs);
}

json scored_pair_json(const ScoredPair& p) {
  json j = {{"pair_id", p.pair_id},
            {"expert_ids", p.expert_ids},
            {"expert_scores", p.expert_scores},
            {"gate_weights", p.gate_weights},
            {"score", p.score}};
  if (p.label) j["label"] = *p.label;
  return j;
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> levels;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      levels.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("'" + tok + "' is not a noise level", "--noise");
    }
  }
  if (levels.empty()) throw ConfigError("empty noise list", "--noise");
  return levels;
}

std::vector<int> parse_ids(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), ::isspace), tok.end());
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("'" + tok + "' is not an expert id", "--experts");
    }
  }
  if (ids.empty()) throw ConfigError("empty expert list", "--experts");
  return ids;
}

void load_checkpoints(const std::vector<std::string>& paths, Model& model) {
  for (const auto& p : paths) load_checkpoint(p, model);
}

// --- subcommands -----------------------------------------------------------

int cmd_validate(const std::string& root, const std::string& manifest_path, const RunOptions& ro, std::ostream& out,
                 std::ostream& err) {
  const Config config = load_run_config(ro);
  const auto manifest = load_manifest(manifest_path);
  const FeatureLayout layout{config.similarity_experts, true};
  std::size_t bad = 0;
  for (const auto& e : manifest) {
    try {
      resolve_features(root, e, layout);
    } catch (const Error& ex) {
      ++bad;
      err << e.pair_id << ": " << ex.what() << '\n';
    }
  }
  if (bad == 0) {
    try {
      load_dataset(root, manifest, layout);
    } catch (const Error& ex) {
      err << ex.what() << '\n';
      return kExitRuntime;
    }
  }
  out << manifest.size() - bad << "/" << manifest.size() << " pairs valid\n";
  return bad == 0 ? kExitOk : kExitRuntime;
}

int cmd_train_expert(int id, const std::string& root, const std::string& manifest_path, const std::string& out_path,
                     const std::string& history_path, const RunOptions& ro, std::ostream& out) {
  const Config config = load_run_config(ro);
  Model model(config);
  model.check_expert_id(id);
  const auto manifest = load_manifest(manifest_path);
  const std::vector<int> ids{id};
  const auto layout = model.layout_for(ids);
  const Dataset train = load_split(root, manifest, Split::kTrain, layout);
  const Dataset dev = load_split(root, manifest, Split::kDev, layout);
  Expert& expert = model.create_expert(id, sequence_dims(model, id, train));
  model.set_gate_experts(ids);
  const TrainHistory h = train_expert(expert, train, dev, config.train, config.seed, static_cast<std::uint64_t>(id));
  save_checkpoint(out_path, model);
  write_history(history_path, h);
  const auto& best = h.epochs[h.best_epoch];
  out << "expert " << id << ": best epoch " << h.best_epoch << ", dev srcc "
      << (best.dev_srcc ? std::to_string(*best.dev_srcc) : std::string("undefined")) << '\n';
  return kExitOk;
}

int cmd_train_gate(const std::string& ids_text, const std::vector<std::string>& checkpoints, const std::string& root,
                   const std::string& manifest_path, const std::string& out_path, const std::string& history_path,
                   const RunOptions& ro, std::ostream& out) {
  const Config config = load_run_config(ro);
  Model model(config);
  load_checkpoints(checkpoints, model);
  const auto ids = parse_ids(ids_text);
  for (int id : ids) {
    model.check_expert_id(id);
    if (!model.has_expert(id)) throw ConfigError("expert " + std::to_string(id) + " is not in any checkpoint", "--experts");
  }
  for (int id : model.expert_ids()) model.expert(id).set_frozen(true);

  const auto manifest = load_manifest(manifest_path);
  const auto layout = model.layout_for(ids);
  const Dataset train = load_split(root, manifest, Split::kTrain, layout);
  const Dataset dev = load_split(root, manifest, Split::kDev, layout);
  if (train.records.empty()) throw ValidationError("no training pairs");
  model.create_gate(ids, gate_evidence_dim(model, ids, train.records.front()));

  TrainHistory h;
  if (model.gate()) {
    h = train_gate(model, train, dev, config.gate_train);
  }
  save_checkpoint(out_path, model);
  write_history(history_path, h);
  if (model.gate()) {
    const auto& best = h.epochs[h.best_epoch];
    out << "gate over " << ids.size() << " experts: best epoch " << h.best_epoch << ", dev srcc "
        << (best.dev_srcc ? std::to_string(*best.dev_srcc) : std::string("undefined")) << '\n';
  } else {
    out << "single expert: no gate to train\n";
  }
  return kExitOk;
}

int cmd_predict(const std::vector<std::string>& checkpoints, const std::string& root, const std::string& manifest_path,
                const std::string& split_name, const std::string& out_path, bool serial, const RunOptions& ro,
                std::ostream& out) {
  const Config config = load_run_config(ro);
  Model model(config);
  load_checkpoints(checkpoints, model);
  if (model.gate_experts().empty()) throw ConfigError("checkpoints define no expert subset", "--checkpoint");
  const auto manifest = load_manifest(manifest_path);
  const Dataset ds = load_split(root, manifest, parse_split(split_name), model.layout_for(model.gate_experts()));
  auto preds = model.predict_all(ds.records, !serial);
  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + out_path);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].label = ds.entries[i].label;
    f << scored_pair_json(preds[i]).dump() << '\n';
  }
  out << "wrote " << preds.size() << " predictions to " << out_path << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& predictions_path, const std::string& manifest_path, const std::string& split_name,
                 const std::string& out_path, const std::string& table_path, const std::string& name,
                 std::ostream& out) {
  const auto manifest = filter_split(load_manifest(manifest_path), parse_split(split_name));
  std::ifstream in(predictions_path);
  if (!in) throw IoError("cannot open predictions " + predictions_path);
  std::unordered_map<std::string, double> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      scores[j.at("pair_id").get<std::string>()] = j.at("score").get<double>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad prediction record: ") + e.what(), line_no);
    }
  }
  std::vector<ScoredPair> rows;
  for (const auto& e : manifest) {
    auto it = scores.find(e.pair_id);
    if (it == scores.end()) throw ValidationError("no prediction for pair '" + e.pair_id + "'");
    ScoredPair p;
    p.pair_id = e.pair_id;
    p.label = e.label;
    p.score = it->second;
    rows.push_back(std::move(p));
  }
  const EvalReport report = evaluate(rows);
  const std::string text = json(to_json(report)).dump(2) + "\n";
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + out_path);
    f << text;
  }
  const std::vector<ReportRow> table{{name, report}};
  const std::string table_text = format_table(table);
  if (!table_path.empty()) {
    std::ofstream f(table_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + table_path);
    f << table_text;
  }
  out << table_text;
  return kExitOk;
}

int cmd_ablate(const std::vector<std::string>& checkpoints, const std::string& root, const std::string& manifest_path,
               const std::string& subsets_text, const std::string& out_path, const std::string& json_path,
               const RunOptions& ro, std::ostream& out) {
  const Config config = load_run_config(ro);
  auto subsets = parse_subsets(subsets_text);
  Model probe(config);
  for (const auto& s : subsets) {
    for (int id : s) probe.check_expert_id(id);
  }
  // Singletons first, then larger subsets, as in the reference table layout.
  std::stable_sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });

  Model base(config);
  load_checkpoints(checkpoints, base);
  std::vector<int> needed;
  for (const auto& s : subsets) needed.insert(needed.end(), s.begin(), s.end());
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  for (int id : needed) {
    if (!base.has_expert(id)) throw ConfigError("expert " + std::to_string(id) + " is not in any checkpoint", "--subsets");
  }

  const auto manifest = load_manifest(manifest_path);
  const auto layout = base.layout_for(needed);
  const Dataset train = load_split(root, manifest, Split::kTrain, layout);
  const Dataset dev = load_split(root, manifest, Split::kDev, layout);

  std::vector<ReportRow> rows;
  json rows_json = json::array();
  for (const auto& ids : subsets) {
    Model model(config);
    load_checkpoints(checkpoints, model);
    for (int id : model.expert_ids()) model.expert(id).set_frozen(true);
    model.create_gate(ids, gate_evidence_dim(model, ids, train.records.front()));
    if (model.gate()) train_gate(model, train, dev, config.gate_train);
    auto preds = model.predict_all(dev.records);
    for (std::size_t i = 0; i < preds.size(); ++i) preds[i].label = dev.entries[i].label;
    const EvalReport report = evaluate(preds);
    rows.push_back({subset_label(ids), report});
    json r = to_json(report);
    r["system"] = subset_label(ids);
    r["experts"] = ids;
    rows_json.push_back(r);
  }
  const std::string table = format_table(rows);
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + out_path);
    f << table;
  }
  if (!json_path.empty()) {
    std::ofstream f(json_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + json_path);
    f << rows_json.dump(2) << '\n';
  }
  out << table;
  return kExitOk;
}

}  // namespace

std::vector<std::vector<int>> parse_subsets(const std::string& text) {
  std::vector<std::vector<int>> out;
  std::stringstream ss(text);
  std::string group;
  while (std::getline(ss, group, ';')) {
    if (group.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_ids(group));
  }
  if (out.empty()) throw ConfigError("no subsets given", "--subsets");
  return out;
}

std::string subset_label(const std::vector<int>& ids) {
  if (ids.size() == 1) return "Expert " + std::to_string(ids.front());
  auto sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  bool prefix = true;
  for (std::size_t i = 0; i < sorted.size(); ++i) prefix = prefix && sorted[i] == static_cast<int>(i + 1);
  if (prefix) return "MoE (" + std::to_string(ids.size()) + " Experts)";
  std::string label = "MoE (Experts ";
  for (std::size_t i = 0; i < sorted.size(); ++i) label += (i ? "+" : "") + std::to_string(sorted[i]);
  return label + ")";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture-of-experts text-audio relevance scoring"};
  app.require_subcommand(1);

  RunOptions ro;
  std::string root, manifest, out_path, history, split = "dev", predictions, table, name = "System", json_out;
  std::vector<std::string> checkpoints;
  int expert_id = 0;
  std::string experts_text = "1,2,3,4";
  std::string subsets_text = "1;2;3;4;1,2,3;1,2,3,4";
  bool serial = false;

  auto* validate = app.add_subcommand("validate", "Check that every manifest entry has valid features");
  validate->add_option("--root", root, "Feature root directory")->required();
  validate->add_option("--manifest", manifest, "Manifest JSONL")->required();
  add_config_options(validate, ro);

  SynthOptions so;
  std::string noise_text = "0.5";
  auto* synth = app.add_subcommand("synth", "Generate a planted synthetic dataset");
  synth->add_option("--out", so.out, "Output directory")->required();
  synth->add_option("--n", so.n, "Number of pairs")->required();
  synth->add_option("--seed", so.seed, "Generator seed")->required();
  synth->add_option("--noise", noise_text, "Noise level, or one per expert separated by commas");
  synth->add_option("--dev-fraction", so.dev_fraction, "Share of pairs in the dev split");
  synth->add_option("--test-fraction", so.test_fraction, "Share of unlabeled test pairs");
  synth->add_option("--pooled-dim", so.pooled_dim, "Pooled embedding width");
  synth->add_option("--layers", so.layers, "Audio layers for the sequence expert");
  synth->add_option("--frames", so.audio_frames, "Audio frames per pair");
  synth->add_option("--tokens", so.text_tokens, "Text tokens per pair");
  synth->add_option("--audio-dim", so.audio_dim, "Audio frame width");
  synth->add_option("--text-dim", so.text_dim, "Text token width");

  auto* train_expert_cmd = app.add_subcommand("train-expert", "Phase A: fine-tune one expert");
  train_expert_cmd->add_option("--expert", expert_id, "Expert id (1-based)")->required();
  train_expert_cmd->add_option("--root", root)->required();
  train_expert_cmd->add_option("--manifest", manifest)->required();
  train_expert_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  train_expert_cmd->add_option("--history", history, "Epoch history JSONL");
  add_config_options(train_expert_cmd, ro);

  auto* train_gate_cmd = app.add_subcommand("train-gate", "Phase B: train the gate over frozen experts");
  train_gate_cmd->add_option("--checkpoint", checkpoints, "Expert checkpoint(s)")->required();
  train_gate_cmd->add_option("--experts", experts_text, "Expert ids to fuse, e.g. 1,2,3,4");
  train_gate_cmd->add_option("--root", root)->required();
  train_gate_cmd->add_option("--manifest", manifest)->required();
  train_gate_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  train_gate_cmd->add_option("--history", history, "Epoch history JSONL");
  add_config_options(train_gate_cmd, ro);

  auto* predict = app.add_subcommand("predict", "Score pairs with a trained model");
  predict->add_option("--checkpoint", checkpoints)->required();
  predict->add_option("--root", root)->required();
  predict->add_option("--manifest", manifest)->required();
  predict->add_option("--split", split, "train, dev or test");
  predict->add_option("--out", out_path, "Prediction JSONL")->required();
  predict->add_flag("--serial", serial, "Disable parallel inference");
  add_config_options(predict, ro);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compute SRCC/LCC/KTAU/MSE for a prediction file");
  evaluate_cmd->add_option("--predictions", predictions)->required();
  evaluate_cmd->add_option("--manifest", manifest)->required();
  evaluate_cmd->add_option("--split", split);
  evaluate_cmd->add_option("--out", out_path, "EvalReport JSON");
  evaluate_cmd->add_option("--table", table, "Plain-text table");
  evaluate_cmd->add_option("--name", name, "System name in the table");

  auto* ablate = app.add_subcommand("ablate", "Individual experts vs. gated subsets on dev");
  ablate->add_option("--checkpoint", checkpoints)->required();
  ablate->add_option("--root", root)->required();
  ablate->add_option("--manifest", manifest)->required();
  ablate->add_option("--subsets", subsets_text, "Semicolon-separated subsets");
  ablate->add_option("--out", out_path, "Plain-text table");
  ablate->add_option("--json", json_out, "Rows as JSON");
  add_config_options(ablate, ro);

  std::vector<std::string> argv_store;
  argv_store.push_back("moescore");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(root, manifest, ro, out, err);
    if (synth->parsed()) {
      const auto levels = parse_levels(noise_text);
      so.noise = levels.size() == 1 ? std::vector<double>(so.similarity_experts.size() + 1, levels[0]) : levels;
      synthesize(so);
      out << "wrote " << so.n << " pairs to " << so.out.string() << '\n';
      return kExitOk;
    }
    if (train_expert_cmd->parsed()) return cmd_train_expert(expert_id, root, manifest, out_path, history, ro, out);
    if (train_gate_cmd->parsed()) {
      return cmd_train_gate(experts_text, checkpoints, root, manifest, out_path, history, ro, out);
    }
    if (predict->parsed()) return cmd_predict(checkpoints, root, manifest, split, out_path, serial, ro, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(predictions, manifest, split, out_path, table, name, out);
    if (ablate->parsed()) return cmd_ablate(checkpoints, root, manifest, subsets_text, out_path, json_out, ro, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace moescore
