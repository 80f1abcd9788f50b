// End-to-end acceptance runner. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Usage: acceptance <work-dir>

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "grad_graphs.hpp"
#include "moescore/cli.hpp"
#include "moescore/losses.hpp"
#include "moescore/model.hpp"
#include "property_suites.hpp"

using namespace moescore;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Runs one CLI command in-process; throws with its stderr on failure.
void cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != kExitOk) {
    std::string cmd;
    for (const auto& a : args) cmd += a + " ";
    throw std::runtime_error("'" + cmd + "' exited " + std::to_string(code) + ": " + err.str());
  }
}

// Small sequence-expert dims keep single-threaded training within budget.
const char* kConfig = R"({"expert4": {"model_dim": 16, "heads": 2, "hidden_dim": 16}})";

struct Corpus {
  fs::path dir;
  std::string root() const { return (dir / "features").string(); }
  std::string manifest() const { return (dir / "manifest.jsonl").string(); }
  std::string config() const { return (dir / "config.json").string(); }
  std::string ckpt(int id) const { return (dir / ("expert" + std::to_string(id) + ".mck")).string(); }
};

Corpus make_corpus(const fs::path& dir, std::size_t n, const std::string& noise, std::uint64_t seed) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  Corpus c{dir};
  std::ofstream(c.config()) << kConfig;
  cli({"synth", "--out", dir.string(), "--n", std::to_string(n), "--seed", std::to_string(seed), "--noise", noise});
  return c;
}

void train_experts(const Corpus& c) {
  for (int id = 1; id <= 4; ++id) {
    cli({"train-expert", "--expert", std::to_string(id), "--root", c.root(), "--manifest", c.manifest(), "--out",
         c.ckpt(id), "--config", c.config()});
  }
}

std::vector<std::string> checkpoint_args(const Corpus& c, std::vector<std::string> args) {
  for (int id = 1; id <= 4; ++id) {
    args.push_back("--checkpoint");
    args.push_back(c.ckpt(id));
  }
  return args;
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  const double err = gradgraph::suite_max_error(1);
  const double t = seconds_since(t0);
  return {err < 1e-4 && t < 10.0, "max relative error " + fmt("%.3g", err) + ", " + fmt("%.2f", t) + " s"};
}

Verdict metric_suite() {
  const auto s = suites::metric_oracles(200);
  const bool ok = s.instances == 200 && s.with_ties > 0 && s.with_ties < s.instances && s.ktau_mismatches == 0 &&
                  s.srcc_max_error <= 1e-12 && s.lcc_max_error <= 1e-12;
  return {ok, std::to_string(s.instances) + " instances (" + std::to_string(s.with_ties) + " with ties), ktau mismatches " +
                  std::to_string(s.ktau_mismatches) + ", srcc err " + fmt("%.2g", s.srcc_max_error) + ", lcc err " +
                  fmt("%.2g", s.lcc_max_error)};
}

Verdict loss_algebra() {
  bool ok = true;
  // Each worked example equals its formula evaluated in doubles, bit for bit.
  ok &= contrastive_loss(1.0, 0.2, 0.1) == 1.0 - 0.2 - 0.1;
  ok &= std::abs(contrastive_loss(1.0, 0.2, 0.1) - 0.7) < 1e-15;
  ok &= contrastive_loss(-0.3, 0.4, 0.2) == std::abs(-0.3 - 0.4) - 0.2;
  ok &= std::abs(contrastive_loss(-0.3, 0.4, 0.2) - 0.5) < 1e-15;
  const std::vector<double> p{5.0, 1.0}, y{3.0, 1.1};
  ok &= clipped_mse(p, y, 0.25) == 2.0;
  const std::vector<double> same{2.0, 4.0};
  ok &= clipped_mse(same, same, 0.0) == 0.0;

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  std::size_t bit_mismatches = 0;
  for (int it = 0; it < 1000; ++it) {
    std::vector<double> pred(16), target(16);
    for (std::size_t i = 0; i < 16; ++i) {
      pred[i] = u(gen);
      target[i] = u(gen);
    }
    std::vector<IndexPair> pairs;
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = i + 1; j < 16; ++j) pairs.emplace_back(i, j);
    LossConfig cfg;
    cfg.gamma = 0.0;
    cfg.beta = u(gen) / 3.0;
    const double total = total_loss(pred, target, pairs, cfg).value;
    if (total != cfg.beta * clipped_mse(pred, target, cfg.tau)) ++bit_mismatches;
  }
  ok &= bit_mismatches == 0;
  return {ok, "worked examples hold; gamma=0 bit mismatches " + std::to_string(bit_mismatches) + "/1000"};
}

Verdict gate_suite() {
  const auto s = suites::gate_simplex(1000);
  const bool ok = s.evaluations == 1000 && s.max_sum_error <= 1e-9 && s.out_of_hull == 0;
  return {ok, std::to_string(s.evaluations) + " evaluations, max |sum-1| " + fmt("%.2g", s.max_sum_error) +
                  ", outside [min,max] " + std::to_string(s.out_of_hull)};
}

// Loads every expert parameter from each checkpoint and compares them bitwise.
bool experts_identical(const std::vector<std::string>& phase_a, const std::string& phase_b, std::string& why) {
  Config config = Config::from_json(json::parse(kConfig));
  Model a(config), b(config);
  for (const auto& p : phase_a) load_checkpoint(p, a);
  load_checkpoint(phase_b, b);
  const auto pa = a.parameters();
  auto pb = b.parameters();
  std::size_t compared = 0;
  for (const auto& p : pa) {
    const auto it = std::find_if(pb.begin(), pb.end(), [&](const ParamRef& q) { return q.name == p.name; });
    if (it == pb.end()) {
      why = p.name + " missing after gate training";
      return false;
    }
    const auto x = p.tensor->data(), y = it->tensor->data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end(),
                    [](double l, double r) { return std::bit_cast<std::uint64_t>(l) == std::bit_cast<std::uint64_t>(r); })) {
      why = p.name + " changed";
      return false;
    }
    ++compared;
  }
  why = std::to_string(compared) + " expert tensors bit-identical";
  return compared > 0;
}

struct RelationalResult {
  Verdict freeze;
  Verdict relational;
};

RelationalResult relational(const fs::path& work) {
  const auto t0 = Clock::now();
  // 2500 pairs with a 0.2 dev fraction: 2000 train / 500 dev.
  const Corpus c = make_corpus(work / "relational", 2500, "0.8", 7);
  train_experts(c);
  const auto gate_ckpt = (c.dir / "moe4.mck").string();
  cli(checkpoint_args(c, {"train-gate", "--experts", "1,2,3,4", "--root", c.root(), "--manifest", c.manifest(),
                          "--out", gate_ckpt, "--config", c.config()}));
  const auto ablate_json = (c.dir / "ablation.json").string();
  cli(checkpoint_args(c, {"ablate", "--root", c.root(), "--manifest", c.manifest(), "--subsets",
                          "1;2;3;4;1,2,3;1,2,3,4", "--json", ablate_json, "--config", c.config()}));
  const double t = seconds_since(t0);

  RelationalResult r;
  std::string why;
  std::vector<std::string> phase_a;
  for (int id = 1; id <= 4; ++id) phase_a.push_back(c.ckpt(id));
  r.freeze = {experts_identical(phase_a, gate_ckpt, why), why};

  const auto rows = json::parse(slurp(ablate_json));
  double best_single = -2.0, moe3 = -2.0, moe4 = -2.0;
  std::string singles;
  for (const auto& row : rows) {
    const double s = row.at("srcc");
    const std::string name = row.at("system");
    if (row.at("experts").size() == 1) {
      best_single = std::max(best_single, s);
      singles += fmt("%.3f ", s);
    } else if (name == "MoE (3 Experts)") {
      moe3 = s;
    } else if (name == "MoE (4 Experts)") {
      moe4 = s;
    }
  }
  const bool ok = moe4 >= best_single - 0.01 && moe4 >= moe3 - 0.01 && t < 300.0;
  r.relational = {ok, "single experts " + singles + "| MoE(3) " + fmt("%.3f", moe3) + " | MoE(4) " + fmt("%.3f", moe4) +
                          " | " + fmt("%.1f", t) + " s"};
  return r;
}

Verdict gate_recovery(const fs::path& work) {
  const Corpus c = make_corpus(work / "recovery", 2500, "0,3,3,3", 11);
  train_experts(c);
  const auto gate_ckpt = (c.dir / "moe4.mck").string();
  cli(checkpoint_args(c, {"train-gate", "--experts", "1,2,3,4", "--root", c.root(), "--manifest", c.manifest(),
                          "--out", gate_ckpt, "--config", c.config()}));
  const auto preds = (c.dir / "dev.jsonl").string();
  cli({"predict", "--checkpoint", gate_ckpt, "--root", c.root(), "--manifest", c.manifest(), "--split", "dev", "--out",
       preds, "--config", c.config()});
  std::istringstream lines(slurp(preds));
  std::string line;
  double total = 0.0;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    total += json::parse(line).at("gate_weights")[0].get<double>();
    ++n;
  }
  const double mean = n ? total / static_cast<double>(n) : 0.0;
  return {mean > 0.8, "mean dev gate weight on the noiseless expert " + fmt("%.4f", mean) + " over " +
                          std::to_string(n) + " pairs"};
}

// synth -> train-expert x4 -> train-gate -> predict -> evaluate
std::pair<std::string, std::string> pipeline(const fs::path& dir) {
  const Corpus c = make_corpus(dir, 400, "0.8", 21);
  train_experts(c);
  const auto gate_ckpt = (c.dir / "moe4.mck").string();
  cli(checkpoint_args(c, {"train-gate", "--experts", "1,2,3,4", "--root", c.root(), "--manifest", c.manifest(),
                          "--out", gate_ckpt, "--config", c.config()}));
  const auto preds = (c.dir / "dev.jsonl").string();
  const auto report = (c.dir / "eval.json").string();
  cli({"predict", "--checkpoint", gate_ckpt, "--root", c.root(), "--manifest", c.manifest(), "--out", preds,
       "--config", c.config()});
  cli({"evaluate", "--predictions", preds, "--manifest", c.manifest(), "--out", report});
  return {slurp(preds), slurp(report)};
}

Verdict determinism(const fs::path& work) {
  const auto a = pipeline(work / "run_a");
  const auto b = pipeline(work / "run_b");
  const bool ok = !a.first.empty() && a.first == b.first && a.second == b.second;
  return {ok, std::string("predictions ") + (a.first == b.first ? "identical" : "differ") + ", reports " +
                  (a.second == b.second ? "identical" : "differ")};
}

Verdict format_suite(const fs::path& work) {
  fs::create_directories(work / "mfv");
  const auto s = suites::mfv_round_trips(work / "mfv", 1000);
  const bool ok = s.round_trips == 1000 && s.byte_mismatches == 0 && s.value_mismatches == 0 &&
                  s.malformed_misclassified == 0;
  std::string detail = std::to_string(s.round_trips) + " round trips, " + std::to_string(s.byte_mismatches) +
                       " byte mismatches; " + std::to_string(s.malformed_cases - s.malformed_misclassified) + "/" +
                       std::to_string(s.malformed_cases) + " malformed cases rejected correctly";
  for (const auto& f : s.failures) detail += "; " + f;
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance <work-dir>\n";
    return 2;
  }
  const fs::path work = argv[1];
  fs::create_directories(work);
  omp_set_num_threads(1);  // every timing below is single-threaded

  int failures = 0;
  auto report = [&](int n, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (v.pass ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << v.detail << std::endl;
    failures += !v.pass;
  };

  RelationalResult rel;
  bool rel_ran = false;
  auto run_relational = [&] {
    if (!rel_ran) {
      rel_ran = true;
      try {
        rel = relational(work);
      } catch (const std::exception& e) {
        rel.freeze = rel.relational = {false, std::string("threw: ") + e.what()};
      }
    }
  };

  report(1, gradient_suite);
  report(2, metric_suite);
  report(3, loss_algebra);
  report(4, gate_suite);
  report(5, [&] {
    run_relational();
    return rel.freeze;
  });
  report(6, [&] {
    run_relational();
    return rel.relational;
  });
  report(7, [&] { return gate_recovery(work); });
  report(8, [&] { return determinism(work); });
  report(9, [&] { return format_suite(work); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
